//! Exact color refinement: 1-WL and refinement over annotated path sets.
//!
//! Colors are dense ids handed out by a [`ColorTable`]. Within one iteration,
//! keys that are new to the table receive ids in sorted key order, so a fresh
//! table yields the same colors for every labeling of a graph. Colorings are
//! comparable across graphs only when they were produced with the same table.

use std::collections::HashMap;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeFeatures};
use crate::paths::{bfs_distances, enumerate_paths, PathKind, PathSet};

/// Token standing for a padded position after a terminated path.
pub const DUMMY: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitColors {
    #[default]
    Uniform,
    FromNodeFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementConfig {
    pub kind: PathKind,
    pub max_len: usize,
    pub distance_annotation: bool,
    pub edge_annotation: bool,
    pub dummy_padding: bool,
    pub init: InitColors,
}

impl RefinementConfig {
    /// Padding on, no annotations, uniform initial colors.
    pub fn new(kind: PathKind, max_len: usize) -> Self {
        RefinementConfig {
            kind,
            max_len,
            distance_annotation: false,
            edge_annotation: false,
            dummy_padding: true,
            init: InitColors::Uniform,
        }
    }

    pub fn with_distance(mut self, on: bool) -> Self {
        self.distance_annotation = on;
        self
    }

    pub fn with_edges(mut self, on: bool) -> Self {
        self.edge_annotation = on;
        self
    }

    pub fn with_padding(mut self, on: bool) -> Self {
        self.dummy_padding = on;
        self
    }

    pub fn with_init(mut self, init: InitColors) -> Self {
        self.init = init;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::InvalidParams("refinement needs max_len >= 1".into()));
        }
        Ok(())
    }
}

/// Intern tables, one per iteration, plus an edge-feature table.
#[derive(Debug, Clone, Default)]
pub struct ColorTable {
    iterations: Vec<HashMap<Vec<u64>, u32>>,
    edge_ids: HashMap<Vec<u64>, u64>,
}

impl ColorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct colors ever issued at iteration `k`.
    pub fn num_colors(&self, k: usize) -> usize {
        self.iterations.get(k).map_or(0, HashMap::len)
    }

    fn intern_all(&mut self, k: usize, keys: Vec<Vec<u64>>) -> Vec<u32> {
        if self.iterations.len() <= k {
            self.iterations.resize_with(k + 1, HashMap::new);
        }
        let table = &mut self.iterations[k];
        let mut fresh: Vec<&Vec<u64>> = keys.iter().filter(|key| !table.contains_key(*key)).collect();
        fresh.sort_unstable();
        fresh.dedup();
        for key in fresh {
            let id = table.len() as u32;
            table.insert(key.clone(), id);
        }
        keys.iter().map(|key| table[key]).collect()
    }

    fn edge_id(&mut self, feature: &[f64]) -> u64 {
        let key: Vec<u64> = feature.iter().map(|x| x.to_bits()).collect();
        let next = self.edge_ids.len() as u64;
        *self.edge_ids.entry(key).or_insert(next)
    }
}

/// Per-iteration node colors; iteration 0 is the initial coloring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    colors: Vec<Vec<u32>>,
}

impl Coloring {
    /// Number of refinement iterations after the initial coloring.
    pub fn iterations(&self) -> usize {
        self.colors.len() - 1
    }

    pub fn at(&self, k: usize) -> &[u32] {
        &self.colors[k]
    }

    pub fn num_nodes(&self) -> usize {
        self.colors[0].len()
    }

    pub fn num_classes(&self, k: usize) -> usize {
        let mut c = self.colors[k].clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// First iteration whose partition is no finer than the previous one.
    pub fn stable_at(&self) -> Option<usize> {
        (1..self.colors.len()).find(|&k| self.num_classes(k) == self.num_classes(k - 1))
    }

    /// Sorted color multiset of iteration `k`.
    pub fn histogram(&self, k: usize) -> Vec<u32> {
        let mut c = self.colors[k].clone();
        c.sort_unstable();
        c
    }
}

fn initial_keys(g: &Graph, init: InitColors) -> Vec<Vec<u64>> {
    let n = g.num_nodes();
    match (init, g.node_features()) {
        (InitColors::FromNodeFeatures, Some(NodeFeatures::Real(rows))) => {
            rows.iter().map(|r| std::iter::once(1).chain(r.iter().map(|x| x.to_bits())).collect()).collect()
        }
        (InitColors::FromNodeFeatures, Some(NodeFeatures::Categorical(cats))) => {
            cats.iter().map(|&c| vec![2, u64::from(c)]).collect()
        }
        _ => vec![vec![0]; n],
    }
}

/// 1-WL: a node's next color interns its current color with the sorted
/// multiset of its neighbours' colors.
pub fn wl_refine(g: &Graph, iters: usize, init: InitColors, table: &mut ColorTable) -> Result<Coloring> {
    if iters == 0 {
        return Err(Error::InvalidParams("wl_refine needs at least one iteration".into()));
    }
    let mut colors = vec![table.intern_all(0, initial_keys(g, init))];
    for k in 1..=iters {
        let prev = &colors[k - 1];
        let keys: Vec<Vec<u64>> = (0..g.num_nodes())
            .into_par_iter()
            .map(|v| {
                let mut nb: Vec<u64> = g.neighbors(v).iter().map(|&u| u64::from(prev[u])).collect();
                nb.sort_unstable();
                let mut key = Vec::with_capacity(nb.len() + 1);
                key.push(u64::from(prev[v]));
                key.extend(nb);
                key
            })
            .collect();
        let next = table.intern_all(k, keys);
        colors.push(next);
    }
    Ok(Coloring { colors })
}

/// Refinement over annotated path sets. At iteration `k` a node's color
/// interns its previous color with the sorted multiset of its length-`k`
/// path sequences (previous colors of the path nodes after the source, plus
/// the enabled annotations). With padding on, every path of length `j < k`
/// that extends no further contributes its sequence followed by `k - j`
/// DUMMY elements.
pub fn path_refine(g: &Graph, ps: &PathSet, cfg: &RefinementConfig, table: &mut ColorTable) -> Result<Coloring> {
    cfg.validate()?;
    if ps.kind() != cfg.kind {
        return Err(Error::ConfigMismatch(format!("path set is {}, config asks for {}", ps.kind(), cfg.kind)));
    }
    if ps.max_len() < cfg.max_len {
        return Err(Error::ConfigMismatch(format!(
            "path set reaches length {}, config asks for {}",
            ps.max_len(),
            cfg.max_len
        )));
    }
    if ps.num_nodes() != g.num_nodes() {
        return Err(Error::SizeMismatch { left: ps.num_nodes(), right: g.num_nodes() });
    }
    let n = g.num_nodes();

    // Edge ids are interned in sorted edge order so they do not depend on
    // traversal order.
    let edge_ids: HashMap<(u32, u32), u64> = if cfg.edge_annotation {
        let feats = g
            .edge_features()
            .ok_or_else(|| Error::ConfigMismatch("edge annotation requested but graph has no edge features".into()))?;
        feats.iter().map(|(&(u, v), f)| ((u as u32, v as u32), table.edge_id(f))).collect()
    } else {
        HashMap::new()
    };
    let distances: Vec<Vec<usize>> = if cfg.distance_annotation {
        (0..n).into_par_iter().map(|v| bfs_distances(g, v)).collect()
    } else {
        Vec::new()
    };
    // maximal[j][i]: path i of length j extends no further (j = 1..K-1).
    let maximal: Vec<Vec<bool>> = (0..cfg.max_len)
        .map(|j| if j == 0 { Vec::new() } else { ps.extension_flags(j).into_iter().map(|e| !e).collect() })
        .collect();

    let width = 1 + usize::from(cfg.distance_annotation) + usize::from(cfg.edge_annotation);
    let mut colors = vec![table.intern_all(0, initial_keys(g, cfg.init))];
    for k in 1..=cfg.max_len {
        let prev = &colors[k - 1];
        let element = |src: usize, path: &[u32], t: usize, out: &mut Vec<u64>| {
            let node = path[t] as usize;
            out.push(u64::from(prev[node]));
            if cfg.distance_annotation {
                out.push(distances[src][node] as u64);
            }
            if cfg.edge_annotation {
                let (a, b) = (path[t - 1].min(path[t]), path[t - 1].max(path[t]));
                out.push(edge_ids[&(a, b)]);
            }
        };
        let keys: Vec<Vec<u64>> = (0..n)
            .into_par_iter()
            .map(|v| {
                let mut seqs: Vec<Vec<u64>> = Vec::with_capacity(ps.count(v, k));
                for path in ps.paths(v, k) {
                    let mut seq = Vec::with_capacity(k * width);
                    for t in 1..=k {
                        element(v, path, t, &mut seq);
                    }
                    seqs.push(seq);
                }
                if cfg.dummy_padding {
                    if ps.count(v, 1) == 0 {
                        seqs.push(vec![DUMMY; k * width]);
                    }
                    for j in 1..k {
                        let block = ps.block(v, j);
                        let flags = &maximal[j][block.clone()];
                        for (path, _) in ps.paths(v, j).zip(flags).filter(|(_, &m)| m) {
                            let mut seq = Vec::with_capacity(k * width);
                            for t in 1..=j {
                                element(v, path, t, &mut seq);
                            }
                            seq.resize(k * width, DUMMY);
                            seqs.push(seq);
                        }
                    }
                }
                seqs.sort_unstable();
                let mut key = Vec::with_capacity(2 + seqs.len() * k * width);
                key.push(u64::from(prev[v]));
                key.push(seqs.len() as u64);
                key.extend(seqs.into_iter().flatten());
                key
            })
            .collect();
        let next = table.intern_all(k, keys);
        colors.push(next);
    }
    Ok(Coloring { colors })
}

/// Per-iteration digests (truncated SHA-256) of the sorted color multiset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphFingerprint {
    pub digests: Vec<[u8; 16]>,
}

impl GraphFingerprint {
    pub fn hex(&self, k: usize) -> String {
        self.digests[k].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn graph_fingerprint(c: &Coloring) -> GraphFingerprint {
    let digests = (0..=c.iterations())
        .map(|k| {
            let mut h = Sha256::new();
            h.update((c.num_nodes() as u64).to_le_bytes());
            for color in c.histogram(k) {
                h.update(color.to_le_bytes());
            }
            let full = h.finalize();
            let mut out = [0u8; 16];
            out.copy_from_slice(&full[..16]);
            out
        })
        .collect();
    GraphFingerprint { digests }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    DistinguishedAt(usize),
    Indistinguishable,
}

impl Verdict {
    pub fn is_distinguished(self) -> bool {
        matches!(self, Verdict::DistinguishedAt(_))
    }
}

/// Smallest iteration at which the color multisets differ. Both colorings
/// must come from the same table.
pub fn compare_colorings(a: &Coloring, b: &Coloring) -> Verdict {
    if a.num_nodes() != b.num_nodes() {
        return Verdict::DistinguishedAt(0);
    }
    (0..=a.iterations().min(b.iterations()))
        .find(|&k| a.histogram(k) != b.histogram(k))
        .map_or(Verdict::Indistinguishable, Verdict::DistinguishedAt)
}

/// Enumerates paths for both graphs and compares their refinements under one
/// shared table.
pub fn distinguish(a: &Graph, b: &Graph, cfg: &RefinementConfig, budget: usize) -> Result<Verdict> {
    cfg.validate()?;
    let mut table = ColorTable::new();
    let pa = enumerate_paths(a, cfg.kind, cfg.max_len, budget)?;
    let pb = enumerate_paths(b, cfg.kind, cfg.max_len, budget)?;
    let ca = path_refine(a, &pa, cfg, &mut table)?;
    let cb = path_refine(b, &pb, cfg, &mut table)?;
    Ok(compare_colorings(&ca, &cb))
}

pub fn distinguish_wl(a: &Graph, b: &Graph, iters: usize, init: InitColors) -> Result<Verdict> {
    let mut table = ColorTable::new();
    let ca = wl_refine(a, iters, init, &mut table)?;
    let cb = wl_refine(b, iters, init, &mut table)?;
    Ok(compare_colorings(&ca, &cb))
}

/// True iff partition `a` is at least as fine as `b`: equal colors in `a`
/// imply equal colors in `b`.
pub fn partition_refines(a: &[u32], b: &[u32]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    let mut image: HashMap<u32, u32> = HashMap::with_capacity(a.len());
    Ok(a.iter().zip(b).all(|(&x, &y)| *image.entry(x).or_insert(y) == y))
}
