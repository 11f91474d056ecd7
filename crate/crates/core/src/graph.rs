//! Undirected simple graphs with optional node/edge features and labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-node input features: either dense real vectors of one dimension or
/// categorical ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeFeatures {
    Real(Vec<Vec<f64>>),
    Categorical(Vec<u32>),
}

impl NodeFeatures {
    pub fn len(&self) -> usize {
        match self {
            NodeFeatures::Real(rows) => rows.len(),
            NodeFeatures::Categorical(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the real vectors (1 for categorical ids).
    pub fn dim(&self) -> usize {
        match self {
            NodeFeatures::Real(rows) => rows.first().map_or(0, Vec::len),
            NodeFeatures::Categorical(_) => 1,
        }
    }

    /// Feature row of node `v` as reals; categorical ids become a 1-vector.
    pub fn row(&self, v: usize) -> Vec<f64> {
        match self {
            NodeFeatures::Real(rows) => rows[v].clone(),
            NodeFeatures::Categorical(ids) => vec![f64::from(ids[v])],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Real(f64),
}

/// Edge features keyed by the unordered pair `(min, max)`.
pub type EdgeFeatures = BTreeMap<(usize, usize), Vec<f64>>;

/// An undirected simple graph. Neighbor lists are strictly increasing and
/// symmetric; self-loops and multi-edges are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    id: String,
    adjacency: Vec<Vec<usize>>,
    num_edges: usize,
    node_features: Option<NodeFeatures>,
    edge_features: Option<EdgeFeatures>,
    label: Option<Label>,
}

impl Graph {
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            for index in [u, v] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut num_edges = 0;
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::DuplicateEdge(u.min(w[0]), u.max(w[0])));
            }
            num_edges += list.len();
        }
        let graph = Graph {
            id: String::new(),
            adjacency,
            num_edges: num_edges / 2,
            node_features: None,
            edge_features: None,
            label: None,
        };
        debug_assert!(graph.is_symmetric());
        Ok(graph)
    }

    pub fn empty(num_nodes: usize) -> Self {
        Graph::from_edges(num_nodes, std::iter::empty()).expect("edgeless graph is valid")
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn with_node_features(mut self, features: NodeFeatures) -> Result<Self> {
        if features.len() != self.num_nodes() {
            return Err(Error::FeatureDim(format!(
                "{} feature rows for {} nodes",
                features.len(),
                self.num_nodes()
            )));
        }
        if let NodeFeatures::Real(rows) = &features {
            let dim = features.dim();
            if rows.iter().any(|r| r.len() != dim) {
                return Err(Error::FeatureDim("node feature rows differ in length".into()));
            }
        }
        self.node_features = Some(features);
        Ok(self)
    }

    pub fn with_edge_features(mut self, features: EdgeFeatures) -> Result<Self> {
        if features.len() != self.num_edges {
            return Err(Error::FeatureDim(format!(
                "{} edge feature vectors for {} edges",
                features.len(),
                self.num_edges
            )));
        }
        let dim = features.values().next().map_or(0, Vec::len);
        for (&(u, v), vector) in &features {
            if u >= v || !self.has_edge(u, v) {
                return Err(Error::FeatureDim(format!("edge feature for non-edge ({u}, {v})")));
            }
            if vector.len() != dim {
                return Err(Error::FeatureDim("edge feature vectors differ in length".into()));
            }
        }
        self.edge_features = Some(features);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn node_features(&self) -> Option<&NodeFeatures> {
        self.node_features.as_ref()
    }

    pub fn edge_features(&self) -> Option<&EdgeFeatures> {
        self.edge_features.as_ref()
    }

    pub fn edge_feature(&self, u: usize, v: usize) -> Option<&[f64]> {
        self.edge_features
            .as_ref()
            .and_then(|f| f.get(&(u.min(v), u.max(v))))
            .map(Vec::as_slice)
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn sorted_degrees(&self) -> Vec<usize> {
        let mut degrees: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        degrees.sort_unstable();
        degrees
    }

    /// Relabels nodes: node `v` becomes `perm[v]`. Features and labels move along.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::SizeMismatch { left: perm.len(), right: n });
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParams("not a permutation".into()));
            }
        }
        let mut graph = Graph::from_edges(n, self.edges().map(|(u, v)| (perm[u], perm[v])))?
            .with_id(self.id.clone())
            .with_label(self.label);
        if let Some(features) = &self.node_features {
            let mut inverse = vec![0; n];
            for (v, &p) in perm.iter().enumerate() {
                inverse[p] = v;
            }
            let moved = match features {
                NodeFeatures::Real(rows) => {
                    NodeFeatures::Real(inverse.iter().map(|&v| rows[v].clone()).collect())
                }
                NodeFeatures::Categorical(ids) => {
                    NodeFeatures::Categorical(inverse.iter().map(|&v| ids[v]).collect())
                }
            };
            graph = graph.with_node_features(moved)?;
        }
        if let Some(features) = &self.edge_features {
            let moved = features
                .iter()
                .map(|(&(u, v), f)| {
                    let (a, b) = (perm[u], perm[v]);
                    ((a.min(b), a.max(b)), f.clone())
                })
                .collect();
            graph = graph.with_edge_features(moved)?;
        }
        Ok(graph)
    }

    /// Disjoint union; nodes of `other` are shifted by `self.num_nodes()`.
    /// Features are dropped.
    pub fn disjoint_union(&self, other: &Graph) -> Graph {
        let offset = self.num_nodes();
        let edges = self
            .edges()
            .chain(other.edges().map(|(u, v)| (u + offset, v + offset)))
            .collect::<Vec<_>>();
        Graph::from_edges(offset + other.num_nodes(), edges).expect("union of simple graphs")
    }

    fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(u, list)| {
            list.iter().all(|&v| v != u && self.adjacency[v].binary_search(&u).is_ok())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { num_classes: usize },
    Regression,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub graphs: Vec<Graph>,
}

impl Dataset {
    /// Validates that every label agrees with `task`.
    pub fn new(name: impl Into<String>, task: Task, graphs: Vec<Graph>) -> Result<Self> {
        for (i, g) in graphs.iter().enumerate() {
            let ok = match (task, g.label()) {
                (_, None) => true,
                (Task::Classification { num_classes }, Some(Label::Class(c))) => c < num_classes,
                (Task::Regression, Some(Label::Real(_))) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Schema {
                    line: i + 1,
                    reason: format!("label {:?} inconsistent with task {:?}", g.label(), task),
                });
            }
        }
        Ok(Dataset { name: name.into(), task, graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert_eq!(Graph::from_edges(3, [(1, 1)]), Err(Error::SelfLoop(1)));
        assert_eq!(Graph::from_edges(3, [(0, 1), (1, 0)]), Err(Error::DuplicateEdge(0, 1)));
        assert!(matches!(
            Graph::from_edges(2, [(0, 2)]),
            Err(Error::NodeOutOfRange { index: 2, num_nodes: 2 })
        ));
    }

    #[test]
    fn adjacency_is_sorted_and_symmetric() {
        let g = Graph::from_edges(4, [(3, 0), (1, 0), (2, 1)]).unwrap();
        assert_eq!(g.neighbors(0), &[1, 3]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 3), (1, 2)]);
        assert!(g.has_edge(2, 1));
        assert!(!g.has_edge(2, 3));
    }

    #[test]
    fn permute_moves_features() {
        let g = Graph::from_edges(3, [(0, 1)])
            .unwrap()
            .with_node_features(NodeFeatures::Categorical(vec![7, 8, 9]))
            .unwrap();
        let p = g.permute(&[2, 0, 1]).unwrap();
        assert!(p.has_edge(2, 0));
        assert_eq!(p.node_features(), Some(&NodeFeatures::Categorical(vec![8, 9, 7])));
        assert!(g.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn edge_features_must_cover_edges() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let mut f = EdgeFeatures::new();
        f.insert((0, 1), vec![1.0]);
        assert!(g.clone().with_edge_features(f.clone()).is_err());
        f.insert((1, 2), vec![2.0]);
        let g = g.with_edge_features(f).unwrap();
        assert_eq!(g.edge_feature(2, 1), Some(&[2.0][..]));
    }

    #[test]
    fn dataset_checks_labels() {
        let g = Graph::empty(1).with_label(Some(Label::Class(3)));
        assert!(Dataset::new("d", Task::Classification { num_classes: 3 }, vec![g.clone()]).is_err());
        assert!(Dataset::new("d", Task::Classification { num_classes: 4 }, vec![g]).is_ok());
    }
}
