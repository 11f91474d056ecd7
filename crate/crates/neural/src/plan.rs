//! Execution plans: a graph's path sets compiled into shared computations.
//!
//! Nodes whose inputs and path multisets coincide at a layer are merged into
//! one class, and the reversed paths of a layer are stored as a trie whose
//! nodes are keyed by (parent, input class, distance, edge). Every trie node
//! is one recurrent step; a class state stands for all of its nodes. Ids are
//! issued in sorted key order, so a plan does not depend on node numbering.
//! The discrete variant keeps one class per node, which per-node dropout
//! masks require.

use std::collections::{BTreeMap, HashMap};

use pathlab_core::paths::bfs_distances;
use pathlab_core::{Graph, Label, NodeFeatures, PathSet};

use crate::config::ModelConfig;
use crate::error::{NeuralError, Result};

/// Edge token of the first step of every sequence.
pub(crate) const NO_EDGE: u32 = u32::MAX;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Depth {
    pub parent: Vec<u32>,
    pub input: Vec<u32>,
    pub dist: Vec<u32>,
    pub edge: Vec<u32>,
}

impl Depth {
    pub fn len(&self) -> usize {
        self.input.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct LayerPlan {
    /// `k + 1` trie depths; depth `k` holds the finished sequences.
    pub depths: Vec<Depth>,
    /// Previous-layer class of every class.
    pub class_prev: Vec<u32>,
    pub agg_offsets: Vec<u32>,
    pub agg_leaf: Vec<u32>,
    pub agg_count: Vec<f64>,
    /// Number of paths per class member.
    pub path_total: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPlan {
    pub(crate) num_nodes: usize,
    pub(crate) label: Option<Label>,
    pub(crate) input_dim: usize,
    /// Feature row of every layer-0 class.
    pub(crate) features: Vec<f64>,
    /// Class sizes per layer `0..=K`.
    pub(crate) class_sizes: Vec<Vec<f64>>,
    pub(crate) layers: Vec<LayerPlan>,
    pub(crate) edge_dim: usize,
    /// Distinct edge feature rows.
    pub(crate) edge_rows: Vec<f64>,
    /// Final-layer class of every node.
    pub(crate) node_class: Vec<u32>,
    pub(crate) discrete: bool,
}

impl GraphPlan {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    /// Class count per layer.
    pub fn num_classes(&self) -> Vec<usize> {
        self.class_sizes.iter().map(Vec::len).collect()
    }

    /// Recurrent steps per forward pass.
    pub fn num_steps(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.depths).map(Depth::len).sum()
    }
}

fn feature_rows(g: &Graph, input_dim: usize) -> Result<Vec<Vec<f64>>> {
    let n = g.num_nodes();
    match g.node_features() {
        None => Ok(vec![vec![1.0; input_dim]; n]),
        Some(NodeFeatures::Real(rows)) => {
            if rows.iter().any(|r| r.len() != input_dim) {
                return Err(NeuralError::ShapeMismatch(format!(
                    "graph {} has node features of width {}, model expects {input_dim}",
                    g.id(),
                    g.node_features().map_or(0, NodeFeatures::dim)
                )));
            }
            Ok(rows.clone())
        }
        Some(NodeFeatures::Categorical(cats)) => cats
            .iter()
            .map(|&c| {
                let c = c as usize;
                if c >= input_dim {
                    return Err(NeuralError::ShapeMismatch(format!(
                        "category {c} does not fit a one-hot width of {input_dim}"
                    )));
                }
                let mut row = vec![0.0; input_dim];
                row[c] = 1.0;
                Ok(row)
            })
            .collect(),
    }
}

fn bits(row: &[f64]) -> Vec<u64> {
    row.iter().map(|x| x.to_bits()).collect()
}

/// Dense ids for `keys` in sorted key order.
fn intern_sorted<K: Ord + Clone>(keys: &[K]) -> (Vec<u32>, Vec<K>) {
    let mut uniq: Vec<K> = keys.to_vec();
    uniq.sort();
    uniq.dedup();
    let ids = keys.iter().map(|k| uniq.binary_search(k).expect("present") as u32).collect();
    (ids, uniq)
}

/// Compiles `g` with its path collection. `discrete` keeps every node in
/// its own class.
pub fn compile(g: &Graph, ps: &PathSet, cfg: &ModelConfig, discrete: bool) -> Result<GraphPlan> {
    cfg.validate()?;
    if ps.kind() != cfg.kind || ps.max_len() < cfg.max_len {
        return Err(pathlab_core::Error::ConfigMismatch(format!(
            "model needs {} paths up to length {}, got {} up to {}",
            cfg.kind,
            cfg.max_len,
            ps.kind(),
            ps.max_len()
        ))
        .into());
    }
    if ps.num_nodes() != g.num_nodes() {
        return Err(NeuralError::ShapeMismatch("path set and graph differ in size".into()));
    }
    let n = g.num_nodes();
    let rows = feature_rows(g, cfg.input_dim)?;

    let (mut class, features): (Vec<u32>, Vec<f64>) = if discrete {
        ((0..n as u32).collect(), rows.concat())
    } else {
        let keys: Vec<Vec<u64>> = rows.iter().map(|r| bits(r)).collect();
        let (ids, uniq) = intern_sorted(&keys);
        let feats = uniq.iter().flat_map(|k| k.iter().map(|&b| f64::from_bits(b))).collect();
        (ids, feats)
    };
    let sizes = |class: &[u32]| -> Vec<f64> {
        let count = class.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut s = vec![0.0; count];
        class.iter().for_each(|&c| s[c as usize] += 1.0);
        s
    };
    let mut class_sizes = vec![sizes(&class)];

    let mut edge_token: HashMap<(u32, u32), u32> = HashMap::new();
    let mut edge_rows = Vec::new();
    if cfg.cell.uses_edges() {
        let feats = g.edge_features().ok_or_else(|| {
            pathlab_core::Error::ConfigMismatch(format!("edge cell needs edge features on graph {}", g.id()))
        })?;
        if feats.values().any(|f| f.len() != cfg.edge_dim) {
            return Err(NeuralError::ShapeMismatch(format!("edge features of graph {} are not {} wide", g.id(), cfg.edge_dim)));
        }
        let keys: Vec<Vec<u64>> = feats.values().map(|f| bits(f)).collect();
        let (ids, uniq) = intern_sorted(&keys);
        for ((&(u, v), _), id) in feats.iter().zip(ids) {
            edge_token.insert((u as u32, v as u32), id);
        }
        edge_rows = uniq.iter().flat_map(|k| k.iter().map(|&b| f64::from_bits(b))).collect();
    }
    let distances: Vec<Vec<usize>> =
        if cfg.cell.uses_distance() { (0..n).map(|v| bfs_distances(g, v)).collect() } else { Vec::new() };

    let mut layers = Vec::with_capacity(cfg.max_len);
    for k in 1..=cfg.max_len {
        let mut sources = Vec::with_capacity(ps.paths_of_length(k).len());
        let mut paths: Vec<&[u32]> = Vec::with_capacity(sources.capacity());
        for v in 0..n {
            for p in ps.paths(v, k) {
                sources.push(v);
                paths.push(p);
            }
        }
        let token = |p: &[u32], src: usize, t: usize| -> (u32, u32, u32) {
            // step t reads the path backwards
            let node = p[k - t] as usize;
            let dist = if distances.is_empty() { 0 } else { distances[src][node] as u32 };
            let edge = if edge_token.is_empty() || t == 0 {
                NO_EDGE
            } else {
                let (a, b) = (p[k - t + 1].min(p[k - t]), p[k - t + 1].max(p[k - t]));
                edge_token[&(a, b)]
            };
            (class[node], dist, edge)
        };
        let mut current = vec![u32::MAX; paths.len()];
        let mut depths = Vec::with_capacity(k + 1);
        for t in 0..=k {
            let keys: Vec<(u32, (u32, u32, u32))> = paths
                .iter()
                .zip(&sources)
                .zip(&current)
                .map(|((p, &src), &parent)| (parent, token(p, src, t)))
                .collect();
            let (ids, uniq) = intern_sorted(&keys);
            depths.push(Depth {
                parent: uniq.iter().map(|k| k.0).collect(),
                input: uniq.iter().map(|k| k.1 .0).collect(),
                dist: uniq.iter().map(|k| k.1 .1).collect(),
                edge: uniq.iter().map(|k| k.1 .2).collect(),
            });
            current = ids;
        }

        let mut leaves: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); n];
        for (&src, &leaf) in sources.iter().zip(&current) {
            *leaves[src].entry(leaf).or_default() += 1;
        }
        let keys: Vec<(u32, Vec<(u32, u32)>)> =
            (0..n).map(|v| (class[v], leaves[v].iter().map(|(&l, &c)| (l, c)).collect())).collect();
        let next: Vec<u32> = if discrete { (0..n as u32).collect() } else { intern_sorted(&keys).0 };
        let num_classes = next.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut representative = vec![usize::MAX; num_classes];
        for (v, &c) in next.iter().enumerate() {
            if representative[c as usize] == usize::MAX {
                representative[c as usize] = v;
            }
        }
        let mut layer = LayerPlan { depths, agg_offsets: vec![0], ..LayerPlan::default() };
        for &v in &representative {
            let (prev, agg) = &keys[v];
            layer.class_prev.push(*prev);
            layer.path_total.push(agg.iter().map(|&(_, c)| f64::from(c)).sum());
            for &(leaf, count) in agg {
                layer.agg_leaf.push(leaf);
                layer.agg_count.push(f64::from(count));
            }
            layer.agg_offsets.push(layer.agg_leaf.len() as u32);
        }
        layers.push(layer);
        class = next;
        class_sizes.push(sizes(&class));
    }

    Ok(GraphPlan {
        num_nodes: n,
        label: g.label(),
        input_dim: cfg.input_dim,
        features,
        class_sizes,
        layers,
        edge_dim: cfg.edge_dim,
        edge_rows,
        node_class: class,
        discrete,
    })
}

/// Several plans laid end to end, with every index shifted into the
/// concatenated arrays.
#[derive(Debug, Clone)]
pub(crate) struct BatchPlan {
    pub num_graphs: usize,
    pub num_nodes: Vec<f64>,
    pub features: Vec<f64>,
    pub class_sizes: Vec<Vec<f64>>,
    pub layers: Vec<LayerPlan>,
    pub edge_rows: Vec<f64>,
    /// Graph of every final-layer class.
    pub final_graph: Vec<u32>,
    /// Offsets of each graph's final-layer classes.
    pub final_offsets: Vec<usize>,
    /// Final-layer class of every node, local to its graph.
    pub node_class: Vec<Vec<u32>>,
}

impl BatchPlan {
    pub fn new(plans: &[&GraphPlan]) -> Result<Self> {
        let first = plans.first().ok_or_else(|| NeuralError::ShapeMismatch("empty batch".into()))?;
        let num_layers = first.layers.len();
        if plans.iter().any(|p| p.layers.len() != num_layers || p.input_dim != first.input_dim) {
            return Err(NeuralError::ShapeMismatch("plans compiled for different models".into()));
        }
        let edge_dim = first.edge_dim;
        let mut out = BatchPlan {
            num_graphs: plans.len(),
            num_nodes: plans.iter().map(|p| p.num_nodes as f64).collect(),
            features: plans.iter().flat_map(|p| p.features.iter().copied()).collect(),
            class_sizes: (0..=num_layers)
                .map(|l| plans.iter().flat_map(|p| p.class_sizes[l].iter().copied()).collect())
                .collect(),
            layers: Vec::with_capacity(num_layers),
            edge_rows: plans.iter().flat_map(|p| p.edge_rows.iter().copied()).collect(),
            final_graph: Vec::new(),
            final_offsets: vec![0],
            node_class: plans.iter().map(|p| p.node_class.clone()).collect(),
        };
        let mut class_offset = vec![0u32; plans.len()];
        for l in 0..num_layers {
            let k = l + 1;
            let mut layer = LayerPlan { depths: vec![Depth::default(); k + 1], agg_offsets: vec![0], ..LayerPlan::default() };
            let mut depth_offset = vec![0u32; k + 1];
            let mut edge_offset = 0u32;
            let mut next_class_offset = 0u32;
            for (b, p) in plans.iter().enumerate() {
                let src = &p.layers[l];
                for t in 0..=k {
                    let d = &src.depths[t];
                    let dst = &mut layer.depths[t];
                    let parent_shift = if t == 0 { 0 } else { depth_offset[t - 1] };
                    dst.parent.extend(d.parent.iter().map(|&x| if t == 0 { x } else { x + parent_shift }));
                    dst.input.extend(d.input.iter().map(|&x| x + class_offset[b]));
                    dst.dist.extend_from_slice(&d.dist);
                    dst.edge.extend(d.edge.iter().map(|&x| if x == NO_EDGE { x } else { x + edge_offset }));
                }
                let leaf_shift = depth_offset[k];
                for c in 0..src.class_prev.len() {
                    layer.class_prev.push(src.class_prev[c] + class_offset[b]);
                    layer.path_total.push(src.path_total[c]);
                    let (lo, hi) = (src.agg_offsets[c] as usize, src.agg_offsets[c + 1] as usize);
                    layer.agg_leaf.extend(src.agg_leaf[lo..hi].iter().map(|&x| x + leaf_shift));
                    layer.agg_count.extend_from_slice(&src.agg_count[lo..hi]);
                    layer.agg_offsets.push(layer.agg_leaf.len() as u32);
                }
                for t in 0..=k {
                    depth_offset[t] += src.depths[t].len() as u32;
                }
                edge_offset += (p.edge_rows.len() / edge_dim.max(1)) as u32;
                // shift for this layer's classes, used as inputs by the next layer
                class_offset[b] = next_class_offset;
                next_class_offset += src.class_prev.len() as u32;
            }
            out.layers.push(layer);
        }
        let mut total = 0;
        for (b, p) in plans.iter().enumerate() {
            let c = p.class_sizes[num_layers].len();
            out.final_graph.extend(std::iter::repeat_n(b as u32, c));
            total += c;
            out.final_offsets.push(total);
        }
        Ok(out)
    }
}
