//! Property runs over a seeded random corpus, plus fingerprint separation of
//! the CSL classes and of the cycle pair that fools 1-WL.

use std::collections::HashMap;

use pathlab_core::generate::{csl_family, er_corpus, random_permutation, wl_hard_pair};
use pathlab_core::oracle::naive_path_oracle;
use pathlab_core::paths::{bfs_distances, count_shortest_paths, enumerate_paths, DEFAULT_BUDGET};
use pathlab_core::refine::{
    distinguish, graph_fingerprint, partition_refines, path_refine, wl_refine, ColorTable, InitColors,
    RefinementConfig,
};
use pathlab_core::trees::{
    build_path_tree, build_wl_tree, canonical_tree_hash, level_subset_check, prune_redundant, HashMode, TreeHash,
    TreeHasher,
};
use pathlab_core::{Dataset, Graph, GraphFingerprint, PathKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::report::{run_cases, CaseFn, CaseRecord, Environment, SuiteReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressivenessConfig {
    /// Seed of both random corpora.
    pub seed: u64,
    pub corpus_size: usize,
    pub max_nodes: usize,
    pub oracle_size: usize,
    pub oracle_max_nodes: usize,
    pub max_k: usize,
    /// Relabelled copies of each CSL class checked for invariance.
    pub csl_permutations: usize,
    pub budget: usize,
}

impl Default for ExpressivenessConfig {
    fn default() -> Self {
        ExpressivenessConfig {
            seed: 0,
            corpus_size: 200,
            max_nodes: 12,
            oracle_size: 100,
            oracle_max_nodes: 10,
            max_k: 4,
            csl_permutations: 100,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Runs every property check and separation; see the group names of the
/// returned records.
pub fn run_expressiveness_suite(cfg: &ExpressivenessConfig) -> Result<SuiteReport> {
    let corpus = er_corpus(cfg.corpus_size, 4, cfg.max_nodes, cfg.seed);
    let oracle_corpus = er_corpus(cfg.oracle_size, 4, cfg.oracle_max_nodes, cfg.seed);
    let mut cases: Vec<(String, CaseFn)> = Vec::new();
    for g in &oracle_corpus {
        let id = format!("oracle/{}", g.id());
        cases.push((id.clone(), Box::new(move || oracle_case(&id, g, cfg))));
    }
    for g in &corpus {
        let id = format!("wl-tree-to-path-tree/{}", g.id());
        cases.push((id.clone(), Box::new(move || wl_to_ap_case(&id, g, cfg))));
    }
    cases.push(("wl-tree-to-path-tree-witness".into(), Box::new(|| hard_pair_witness(cfg))));
    for g in &corpus {
        let id = format!("level-subset/{}", g.id());
        cases.push((id.clone(), Box::new(move || level_subset_case(&id, g, cfg))));
    }
    for g in &corpus {
        let id = format!("pruned-wl-tree/{}", g.id());
        cases.push((id.clone(), Box::new(move || pruning_case(&id, g, cfg))));
    }
    cases.push(("shortest-path-blind-spot".into(), Box::new(|| blind_spot_case(cfg))));
    for g in &corpus {
        let id = format!("refines-wl/{}", g.id());
        cases.push((id.clone(), Box::new(move || refines_wl_case(&id, g, cfg))));
    }
    for run in csl_runs() {
        let id = format!("csl/{}", run.name);
        cases.push((id.clone(), Box::new(move || csl_case(&id, &run, cfg))));
    }
    cases.push(("wl-hard-pair".into(), Box::new(|| hard_pair_separation(cfg))));
    let records = run_cases(cases)?;
    Ok(SuiteReport::new("expressiveness", Environment::current(cfg.seed), records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CslRun {
    pub name: &'static str,
    pub refinement: RefinementConfig,
    /// Least number of the 45 class pairs to separate.
    pub min_pairs: usize,
    /// Whether relabelled copies must keep the fingerprint. A single
    /// shortest path is chosen by node order, so SP is not invariant.
    pub invariant: bool,
}

pub fn csl_runs() -> Vec<CslRun> {
    vec![
        CslRun { name: "spp-k11", refinement: RefinementConfig::new(PathKind::SpPlus, 11), min_pairs: 45, invariant: true },
        CslRun {
            name: "ap-k5-distance",
            refinement: RefinementConfig::new(PathKind::Ap, 5).with_distance(true),
            min_pairs: 45,
            invariant: true,
        },
        CslRun { name: "sp-k11", refinement: RefinementConfig::new(PathKind::Sp, 11), min_pairs: 36, invariant: false },
    ]
}

fn oracle_case(id: &str, g: &Graph, cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let mut mismatches = Vec::new();
    for kind in PathKind::ALL {
        for k in 1..=cfg.max_k {
            if enumerate_paths(g, kind, k, cfg.budget)? != naive_path_oracle(g, kind, k) {
                mismatches.push(format!("{kind} K={k}"));
            }
        }
    }
    let ps = enumerate_paths(g, PathKind::SpPlus, cfg.max_k, cfg.budget)?;
    for v in 0..g.num_nodes() {
        let dist = bfs_distances(g, v);
        let sigma = count_shortest_paths(g, v);
        let mut stored: HashMap<usize, u64> = HashMap::new();
        for k in 1..=cfg.max_k {
            for p in ps.paths(v, k) {
                *stored.entry(p[k] as usize).or_default() += 1;
            }
        }
        for u in (0..g.num_nodes()).filter(|&u| u != v && dist[u] <= cfg.max_k) {
            if stored.get(&u).copied().unwrap_or(0) != sigma[u] {
                mismatches.push(format!("shortest-path count {v}->{u}"));
            }
        }
    }
    Ok(CaseRecord::new(id, "oracle", format!("kinds=all K<={}", cfg.max_k))
        .check(mismatches.is_empty())
        .metric(mismatches.len() as f64)
        .detail(mismatches.join("; ")))
}

/// Node pairs whose WL-trees differ while their all-paths trees coincide,
/// as `(k, v, u)`.
pub fn wl_to_ap_violations(g: &Graph, max_k: usize, budget: usize) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    let n = g.num_nodes();
    for k in 1..=max_k {
        let ap = enumerate_paths(g, PathKind::Ap, k, budget)?;
        let mut hasher = TreeHasher::new(HashMode::Exact);
        let mut wl = Vec::with_capacity(n);
        let mut pt = Vec::with_capacity(n);
        for v in 0..n {
            wl.push(hasher.hash(&build_wl_tree(g, v, k, budget)?));
            pt.push(hasher.hash(&build_path_tree(&ap, v, k)?));
        }
        for v in 0..n {
            for u in v + 1..n {
                if wl[v] != wl[u] && pt[v] == pt[u] {
                    out.push((k, v, u));
                }
            }
        }
    }
    Ok(out)
}

fn wl_to_ap_case(id: &str, g: &Graph, cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let bad = wl_to_ap_violations(g, cfg.max_k, cfg.budget)?;
    let detail: Vec<String> = bad.iter().map(|(k, v, u)| format!("k={k} nodes {v},{u}")).collect();
    Ok(CaseRecord::new(id, "wl-tree-to-path-tree", format!("kind=ap k<={}", cfg.max_k))
        .check(bad.is_empty())
        .metric(bad.len() as f64)
        .detail(detail.join("; ")))
}

/// `C6` against two triangles: every WL fingerprint agrees while every
/// all-paths tree of height 3 differs across the pair.
fn hard_pair_witness(cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let (a, b) = wl_hard_pair(3)?;
    let mut table = ColorTable::new();
    let iters = a.num_nodes();
    let fa = graph_fingerprint(&wl_refine(&a, iters, InitColors::Uniform, &mut table)?);
    let fb = graph_fingerprint(&wl_refine(&b, iters, InitColors::Uniform, &mut table)?);
    let mut hasher = TreeHasher::new(HashMode::Exact);
    let trees = |g: &Graph, hasher: &mut TreeHasher| -> Result<Vec<TreeHash>> {
        let ps = enumerate_paths(g, PathKind::Ap, 3, cfg.budget)?;
        (0..g.num_nodes()).map(|v| Ok(hasher.hash(&build_path_tree(&ps, v, 3)?))).collect()
    };
    let ta = trees(&a, &mut hasher)?;
    let tb = trees(&b, &mut hasher)?;
    let all_differ = ta.iter().all(|x| tb.iter().all(|y| x != y));
    Ok(CaseRecord::new("wl-tree-to-path-tree-witness", "wl-tree-to-path-tree-witness", "wl-hard:3 kind=ap k=3")
        .check(fa == fb && all_differ)
        .detail(format!("wl fingerprints equal: {}, all path-trees differ: {all_differ}", fa == fb)))
}

fn level_subset_case(id: &str, g: &Graph, cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let sets = PathKind::ALL.iter().map(|&kind| enumerate_paths(g, kind, cfg.max_k, cfg.budget)).collect::<Result<Vec<_>, _>>()?;
    let mut bad = Vec::new();
    for v in 0..g.num_nodes() {
        for k in 1..=cfg.max_k {
            let wl = build_wl_tree(g, v, k, cfg.budget)?;
            for ps in &sets {
                if !level_subset_check(&build_path_tree(ps, v, k)?, &wl) {
                    bad.push(format!("{} v={v} k={k}", ps.kind()));
                }
            }
        }
    }
    Ok(CaseRecord::new(id, "level-subset", format!("kinds=all k<={}", cfg.max_k))
        .check(bad.is_empty())
        .metric(bad.len() as f64)
        .detail(bad.join("; ")))
}

fn pruning_case(id: &str, g: &Graph, cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let ap = enumerate_paths(g, PathKind::Ap, cfg.max_k, cfg.budget)?;
    let mut bad = Vec::new();
    for v in 0..g.num_nodes() {
        for k in 1..=cfg.max_k {
            let pruned = prune_redundant(&build_wl_tree(g, v, k, cfg.budget)?);
            let ap_tree = build_path_tree(&ap, v, k)?;
            let same = canonical_tree_hash(&pruned, HashMode::Digest) == canonical_tree_hash(&ap_tree, HashMode::Digest)
                && pruned.level_sizes(k) == ap_tree.level_sizes(k);
            if !same {
                bad.push(format!("v={v} k={k}"));
            }
        }
    }
    Ok(CaseRecord::new(id, "pruned-wl-tree", format!("kind=ap k<={}", cfg.max_k))
        .check(bad.is_empty())
        .metric(bad.len() as f64)
        .detail(bad.join("; ")))
}

/// The centre of `P3` against a node of `K3`: WL-trees of height 2 differ,
/// shortest-path trees coincide, padded refinement still separates them.
fn blind_spot_case(cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let p3 = Graph::from_edges(3, [(0, 1), (1, 2)])?;
    let k3 = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)])?;
    let mut hasher = TreeHasher::new(HashMode::Exact);
    let wl_differ = hasher.hash(&build_wl_tree(&p3, 1, 2, cfg.budget)?) != hasher.hash(&build_wl_tree(&k3, 0, 2, cfg.budget)?);
    let mut sp_equal = true;
    let mut refined_apart = true;
    for kind in [PathKind::Sp, PathKind::SpPlus] {
        let pa = enumerate_paths(&p3, kind, 2, cfg.budget)?;
        let pb = enumerate_paths(&k3, kind, 2, cfg.budget)?;
        sp_equal &= hasher.hash(&build_path_tree(&pa, 1, 2)?) == hasher.hash(&build_path_tree(&pb, 0, 2)?);
        let rc = RefinementConfig::new(kind, 2).with_padding(true);
        let mut table = ColorTable::new();
        let ca = path_refine(&p3, &pa, &rc, &mut table)?;
        let cb = path_refine(&k3, &pb, &rc, &mut table)?;
        refined_apart &= ca.at(2)[1] != cb.at(2)[0];
    }
    Ok(CaseRecord::new("shortest-path-blind-spot", "shortest-path-blind-spot", "p3 centre vs k3 node, k=2")
        .check(wl_differ && sp_equal && refined_apart)
        .detail(format!("wl trees differ: {wl_differ}, shortest-path trees equal: {sp_equal}, padded refinement separates: {refined_apart}")))
}

fn refines_wl_case(id: &str, g: &Graph, cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let wl = wl_refine(g, cfg.max_k, InitColors::Uniform, &mut ColorTable::new())?;
    let mut bad = Vec::new();
    for kind in PathKind::ALL {
        let rc = RefinementConfig::new(kind, cfg.max_k).with_padding(true);
        let ps = enumerate_paths(g, kind, cfg.max_k, cfg.budget)?;
        let c = path_refine(g, &ps, &rc, &mut ColorTable::new())?;
        for k in 0..=cfg.max_k {
            if !partition_refines(c.at(k), wl.at(k))? {
                bad.push(format!("{kind} k={k}"));
            }
        }
    }
    Ok(CaseRecord::new(id, "refines-wl", format!("kinds=all padding=on k<={}", cfg.max_k))
        .check(bad.is_empty())
        .metric(bad.len() as f64)
        .detail(bad.join("; ")))
}

/// Fingerprints of each CSL class: the base graph first, then `perms`
/// relabelled copies. Paths are enumerated in parallel; refinement shares one
/// table in a fixed order so that fingerprints are comparable.
pub fn csl_fingerprints(rc: &RefinementConfig, perms: usize, seed: u64, budget: usize) -> Result<Vec<Vec<GraphFingerprint>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<Vec<Graph>> = csl_family()
        .into_iter()
        .map(|g| {
            let mut copies = vec![g.clone()];
            for _ in 0..perms {
                copies.push(g.permute(&random_permutation(g.num_nodes(), &mut rng)).expect("valid permutation"));
            }
            copies
        })
        .collect();
    let flat: Vec<&Graph> = graphs.iter().flatten().collect();
    let sets = flat.par_iter().map(|g| enumerate_paths(g, rc.kind, rc.max_len, budget)).collect::<Result<Vec<_>, _>>()?;
    let mut table = ColorTable::new();
    let mut prints = Vec::with_capacity(flat.len());
    for (g, ps) in flat.iter().zip(&sets) {
        prints.push(graph_fingerprint(&path_refine(g, ps, rc, &mut table)?));
    }
    Ok(prints.chunks(perms + 1).map(<[_]>::to_vec).collect())
}

/// Class pairs whose base fingerprints differ.
pub fn separated_pairs(classes: &[Vec<GraphFingerprint>]) -> usize {
    let mut count = 0;
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            count += usize::from(classes[i][0] != classes[j][0]);
        }
    }
    count
}

/// Pairs are counted on the base graphs of each class.
fn csl_case(id: &str, run: &CslRun, cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let rc = &run.refinement;
    let classes = csl_fingerprints(rc, cfg.csl_permutations, cfg.seed, cfg.budget)?;
    let invariant = classes.iter().all(|c| c.iter().all(|f| *f == c[0]));
    let pairs = separated_pairs(&classes);
    let config = format!("kind={} K={} distance={} permutations={}", rc.kind, rc.max_len, rc.distance_annotation, cfg.csl_permutations);
    Ok(CaseRecord::new(id, "csl", config)
        .check(pairs >= run.min_pairs && (invariant || !run.invariant))
        .metric(pairs as f64)
        .detail(format!(
            "{pairs}/45 class pairs separated (need {}), invariant under relabelling: {invariant} (required: {})",
            run.min_pairs, run.invariant
        )))
}

fn hard_pair_separation(cfg: &ExpressivenessConfig) -> Result<CaseRecord> {
    let (a, b) = wl_hard_pair(3)?;
    let verdict = distinguish(&a, &b, &RefinementConfig::new(PathKind::Ap, 3), cfg.budget)?;
    Ok(CaseRecord::new("wl-hard-pair", "wl-hard-pair", "wl-hard:3 kind=ap K=3")
        .check(verdict.is_distinguished())
        .detail(format!("{verdict:?}")))
}

/// Undistinguished consecutive pairs `(2i, 2i+1)` of a pair dataset such as
/// EXP.
pub fn run_pair_dataset(ds: &Dataset, rc: &RefinementConfig, seed: u64, budget: usize) -> Result<SuiteReport> {
    if !ds.len().is_multiple_of(2) {
        return Err(crate::error::HarnessError::Input(format!("{} graphs do not form pairs", ds.len())));
    }
    let config = format!("kind={} K={} distance={}", rc.kind, rc.max_len, rc.distance_annotation);
    let cases: Vec<(String, CaseFn)> = ds
        .graphs
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| {
            let id = format!("{}/pair{i:04}", ds.name);
            let (rid, config) = (id.clone(), config.clone());
            let f: CaseFn = Box::new(move || {
                let verdict = distinguish(&pair[0], &pair[1], rc, budget)?;
                Ok(CaseRecord::new(&rid, "undistinguished", config.clone())
                    .check(verdict.is_distinguished())
                    .metric(f64::from(u8::from(!verdict.is_distinguished())))
                    .detail(format!("{} vs {}: {verdict:?}", pair[0].id(), pair[1].id())))
            });
            (id, f)
        })
        .collect();
    Ok(SuiteReport::new(format!("pairs-{}", ds.name), Environment::current(seed), run_cases(cases)?))
}
