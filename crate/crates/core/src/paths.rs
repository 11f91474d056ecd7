//! Bounded-length path collections: single shortest paths (SP), all shortest
//! paths (SP+) and all simple paths (AP).
//!
//! Paths are stored per length in one flat node array; within a length the
//! paths are grouped by source and sorted lexicographically, so the whole
//! pool is in lexicographic order.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Distance reported for nodes outside the source's component.
pub const UNREACHABLE: usize = usize::MAX;

pub const DEFAULT_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    /// One shortest path per reachable target (lexicographically smallest).
    Sp,
    /// Every shortest path.
    #[serde(rename = "spp")]
    SpPlus,
    /// Every simple path.
    Ap,
}

impl PathKind {
    pub const ALL: [PathKind; 3] = [PathKind::Sp, PathKind::SpPlus, PathKind::Ap];

    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Sp => "sp",
            PathKind::SpPlus => "spp",
            PathKind::Ap => "ap",
        }
    }
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(PathKind::Sp),
            "spp" | "sp+" | "spplus" => Ok(PathKind::SpPlus),
            "ap" => Ok(PathKind::Ap),
            other => Err(Error::InvalidParams(format!("unknown path kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LengthPool {
    /// `len + 1` node ids per path.
    nodes: Vec<u32>,
    /// Path offsets per source (in paths, not nodes); `num_nodes + 1` entries.
    offsets: Vec<usize>,
}

/// Paths of lengths `1..=max_len` for every source node of one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    kind: PathKind,
    max_len: usize,
    num_nodes: usize,
    pools: Vec<LengthPool>,
}

impl PathSet {
    /// Assembles a path set from per-source, per-length flat node arrays
    /// (`per_source[v][k - 1]`).
    pub(crate) fn from_per_source(
        kind: PathKind,
        max_len: usize,
        per_source: Vec<Vec<Vec<u32>>>,
    ) -> Self {
        let num_nodes = per_source.len();
        let mut pools: Vec<LengthPool> = (0..max_len)
            .map(|_| LengthPool { nodes: Vec::new(), offsets: vec![0] })
            .collect();
        for blocks in per_source {
            for (i, block) in blocks.into_iter().enumerate() {
                let pool = &mut pools[i];
                pool.nodes.extend_from_slice(&block);
                let paths = pool.nodes.len() / (i + 2);
                pool.offsets.push(paths);
            }
        }
        PathSet { kind, max_len, num_nodes, pools }
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Paths of length `k` starting at `v`, each as `k + 1` node ids.
    pub fn paths(&self, v: usize, k: usize) -> std::slice::ChunksExact<'_, u32> {
        let pool = &self.pools[k - 1];
        let (lo, hi) = (pool.offsets[v], pool.offsets[v + 1]);
        pool.nodes[lo * (k + 1)..hi * (k + 1)].chunks_exact(k + 1)
    }

    /// All paths of length `k`, in lexicographic order.
    pub fn paths_of_length(&self, k: usize) -> std::slice::ChunksExact<'_, u32> {
        self.pools[k - 1].nodes.chunks_exact(k + 1)
    }

    /// Index range (into [`PathSet::paths_of_length`]) of the paths of length `k` from `v`.
    pub fn block(&self, v: usize, k: usize) -> std::ops::Range<usize> {
        let offsets = &self.pools[k - 1].offsets;
        offsets[v]..offsets[v + 1]
    }

    pub fn count(&self, v: usize, k: usize) -> usize {
        self.block(v, k).len()
    }

    /// Number of paths per length; entry `k - 1` holds length `k`.
    pub fn count_by_length(&self) -> Vec<usize> {
        (1..=self.max_len).map(|k| self.pools[k - 1].nodes.len() / (k + 1)).collect()
    }

    pub fn total(&self) -> usize {
        self.count_by_length().iter().sum()
    }

    /// Every path as `(source, length, nodes)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &[u32])> + '_ {
        (1..=self.max_len).flat_map(move |k| {
            (0..self.num_nodes).flat_map(move |v| self.paths(v, k).map(move |p| (v, k, p)))
        })
    }

    /// For each path of length `k`, whether some stored path of length
    /// `k + 1` extends it. Always false at `k == max_len`.
    pub fn extension_flags(&self, k: usize) -> Vec<bool> {
        let shorter = self.paths_of_length(k);
        if k >= self.max_len {
            return vec![false; shorter.len()];
        }
        let mut longer = self.paths_of_length(k + 1).map(|q| &q[..=k]).peekable();
        shorter
            .map(|p| {
                while longer.next_if(|q| *q < p).is_some() {}
                longer.peek().is_some_and(|q| *q == p)
            })
            .collect()
    }

    /// Checks that every stored path starts at its source, has distinct
    /// nodes and follows edges of `g`. Samples every `stride`-th path.
    pub fn validate(&self, g: &Graph, stride: usize) -> bool {
        let stride = stride.max(1);
        self.iter().step_by(stride).all(|(v, k, p)| {
            let mut seen = p.to_vec();
            seen.sort_unstable();
            p.len() == k + 1
                && p[0] as usize == v
                && seen.windows(2).all(|w| w[0] != w[1])
                && p.windows(2).all(|w| g.has_edge(w[0] as usize, w[1] as usize))
        })
    }
}

/// Breadth-first distances from `source`; unreachable nodes get [`UNREACHABLE`].
pub fn bfs_distances(g: &Graph, source: usize) -> Vec<usize> {
    let mut dist = vec![UNREACHABLE; g.num_nodes()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        for &w in g.neighbors(u) {
            if dist[w] == UNREACHABLE {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Number of distinct shortest paths from `source` to every node, by dynamic
/// programming over the BFS DAG (0 for unreachable nodes).
pub fn count_shortest_paths(g: &Graph, source: usize) -> Vec<u64> {
    let dist = bfs_distances(g, source);
    let mut order: Vec<usize> = (0..g.num_nodes()).filter(|&u| dist[u] != UNREACHABLE).collect();
    order.sort_by_key(|&u| dist[u]);
    let mut count = vec![0u64; g.num_nodes()];
    count[source] = 1;
    for &u in order.iter().skip(1) {
        count[u] = g
            .neighbors(u)
            .iter()
            .filter(|&&w| dist[w] != UNREACHABLE && dist[w] + 1 == dist[u])
            .fold(0u64, |acc, &w| acc.saturating_add(count[w]));
    }
    count
}

/// Enumerates the paths of `kind` with lengths `1..=max_len` from every node.
///
/// Fails with [`Error::BudgetExceeded`] rather than truncating when more than
/// `budget` paths would be stored.
pub fn enumerate_paths(g: &Graph, kind: PathKind, max_len: usize, budget: usize) -> Result<PathSet> {
    if max_len == 0 {
        return Err(Error::InvalidParams("path length bound must be >= 1".into()));
    }
    if budget == 0 {
        return Err(Error::InvalidParams("path budget must be > 0".into()));
    }
    let per_source: Vec<std::result::Result<Vec<Vec<u32>>, usize>> = (0..g.num_nodes())
        .into_par_iter()
        .map(|v| match kind {
            PathKind::Sp => Ok(lexmin_shortest_paths(g, v, max_len)),
            PathKind::SpPlus | PathKind::Ap => {
                let mut walker = Dfs::new(g, v, kind, max_len, budget);
                walker.run().map(|()| walker.out)
            }
        })
        .collect();

    let mut found = 0usize;
    let mut failed = false;
    for r in &per_source {
        match r {
            Ok(blocks) => {
                found += blocks.iter().enumerate().map(|(i, b)| b.len() / (i + 2)).sum::<usize>()
            }
            Err(partial) => {
                found += partial;
                failed = true;
            }
        }
    }
    if failed || found > budget {
        return Err(Error::BudgetExceeded { budget, found });
    }
    let blocks = per_source.into_iter().map(|r| r.expect("checked above")).collect();
    let set = PathSet::from_per_source(kind, max_len, blocks);
    let stride = if cfg!(debug_assertions) { 1 } else { 101 };
    debug_assert!(set.validate(g, stride));
    Ok(set)
}

struct Dfs<'g> {
    g: &'g Graph,
    kind: PathKind,
    max_len: usize,
    budget: usize,
    dist: Vec<usize>,
    on_path: Vec<bool>,
    path: Vec<u32>,
    found: usize,
    out: Vec<Vec<u32>>,
}

impl<'g> Dfs<'g> {
    fn new(g: &'g Graph, source: usize, kind: PathKind, max_len: usize, budget: usize) -> Self {
        let dist = match kind {
            PathKind::SpPlus => bfs_distances(g, source),
            _ => Vec::new(),
        };
        let mut on_path = vec![false; g.num_nodes()];
        on_path[source] = true;
        Dfs {
            g,
            kind,
            max_len,
            budget,
            dist,
            on_path,
            path: vec![source as u32],
            found: 0,
            out: vec![Vec::new(); max_len],
        }
    }

    /// On budget overflow returns the number of paths found so far.
    fn run(&mut self) -> std::result::Result<(), usize> {
        let depth = self.path.len() - 1;
        if depth == self.max_len {
            return Ok(());
        }
        let tail = *self.path.last().expect("path holds the source") as usize;
        for &w in self.g.neighbors(tail) {
            let allowed = match self.kind {
                PathKind::SpPlus => self.dist[w] == depth + 1,
                _ => !self.on_path[w],
            };
            if !allowed {
                continue;
            }
            self.found += 1;
            if self.found > self.budget {
                return Err(self.found);
            }
            self.path.push(w as u32);
            self.out[depth].extend_from_slice(&self.path);
            self.on_path[w] = true;
            self.run()?;
            self.on_path[w] = false;
            self.path.pop();
        }
        Ok(())
    }
}

/// Lexicographically smallest shortest path to every target within
/// `max_len`, built layer by layer over the BFS DAG: a node's path is its
/// minimum-rank predecessor's path plus itself.
fn lexmin_shortest_paths(g: &Graph, source: usize, max_len: usize) -> Vec<Vec<u32>> {
    let dist = bfs_distances(g, source);
    let n = g.num_nodes();
    let mut parent = vec![usize::MAX; n];
    let mut rank = vec![0usize; n];
    let mut out = vec![Vec::new(); max_len];
    for k in 1..=max_len {
        let mut next: Vec<usize> = (0..n).filter(|&u| dist[u] == k).collect();
        if next.is_empty() {
            break;
        }
        for &u in &next {
            parent[u] = *g
                .neighbors(u)
                .iter()
                .filter(|&&w| dist[w] + 1 == k)
                .min_by_key(|&&w| rank[w])
                .expect("a node at distance k has a predecessor at k - 1");
        }
        next.sort_by_key(|&u| (rank[parent[u]], u));
        for (r, &u) in next.iter().enumerate() {
            rank[u] = r;
            let mut path = vec![u as u32];
            let mut x = u;
            while x != source {
                x = parent[x];
                path.push(x as u32);
            }
            path.reverse();
            out[k - 1].extend_from_slice(&path);
        }
    }
    out
}
