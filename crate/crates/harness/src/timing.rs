//! Path counts and wall-clock phases per path kind and length.

use std::time::Instant;

use pathlab_core::paths::{enumerate_paths, PathSet};
use pathlab_core::{Dataset, PathKind, Task};
use pathlab_neural::train::{evaluate, train_epoch};
use pathlab_neural::{compile, ModelConfig, PathNN};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::report::{CaseRecord, Environment, SuiteReport};

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub kinds: Vec<PathKind>,
    pub ks: Vec<usize>,
    /// Also time plan compilation, one training epoch and one inference
    /// pass of a model with this hidden size.
    pub model_hidden: Option<usize>,
    pub batch_size: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            kinds: PathKind::ALL.to_vec(),
            ks: vec![2, 3],
            model_hidden: None,
            batch_size: 32,
            budget: pathlab_core::paths::DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathCountRow {
    pub kind: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean_paths_per_graph: f64,
}

/// Runs the (kind, K) grid in order, one case at a time so that phases are
/// timed without contention. Besides one record per cell, the report checks
/// that every graph's path count grows with K and with the kind
/// (SP, SP+, AP), and records an informational log-slope of preprocessing
/// time against K per kind.
pub fn timing_bench(ds: &Dataset, cfg: &TimingConfig) -> Result<SuiteReport> {
    if ds.is_empty() {
        return Err(HarnessError::Input("timing needs at least one graph".into()));
    }
    let mut ks = cfg.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut kinds = cfg.kinds.clone();
    kinds.sort_unstable_by_key(|k| PathKind::ALL.iter().position(|x| x == k));
    kinds.dedup();

    let mut records = Vec::new();
    // counts[kind][k][graph]
    let mut counts = vec![vec![Vec::new(); ks.len()]; kinds.len()];
    let mut prep_ms = vec![vec![0.0; ks.len()]; kinds.len()];
    for (ki, &kind) in kinds.iter().enumerate() {
        for (li, &k) in ks.iter().enumerate() {
            let id = format!("paths/{kind}/K={k}");
            let start = Instant::now();
            let sets: Vec<PathSet> = ds
                .graphs
                .iter()
                .map(|g| enumerate_paths(g, kind, k, cfg.budget))
                .collect::<Result<_, _>>()
                .map_err(|e| HarnessError::from(e).in_case(&id))?;
            let prep = start.elapsed().as_secs_f64() * 1e3;
            counts[ki][li] = sets.iter().map(PathSet::total).collect();
            prep_ms[ki][li] = prep;
            let mean = counts[ki][li].iter().sum::<usize>() as f64 / ds.len() as f64;
            let mut rec = CaseRecord::new(&id, "paths", format!("kind={kind} K={k}")).metric(mean);
            rec.phase_ms.insert("preprocessing".into(), prep);
            if let Some(hidden) = cfg.model_hidden {
                model_phases(ds, &sets, kind, k, hidden, cfg, &mut rec).map_err(|e| e.in_case(&id))?;
            }
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            records.push(rec);
        }
    }
    let counts = &counts;
    for (ki, &kind) in kinds.iter().enumerate() {
        let bad: Vec<String> = (1..ks.len())
            .flat_map(|li| (0..ds.len()).filter(move |&g| counts[ki][li][g] < counts[ki][li - 1][g]).map(move |g| (li, g)))
            .map(|(li, g)| format!("{} K={}", ds.graphs[g].id(), ks[li]))
            .collect();
        records.push(
            CaseRecord::new(format!("monotone-in-k/{kind}"), "monotone-in-k", format!("kind={kind}"))
                .check(bad.is_empty())
                .detail(bad.join("; ")),
        );
    }
    for (li, &k) in ks.iter().enumerate() {
        let bad: Vec<String> = (1..kinds.len())
            .flat_map(|ki| (0..ds.len()).filter(move |&g| counts[ki][li][g] < counts[ki - 1][li][g]).map(move |g| (ki, g)))
            .map(|(ki, g)| format!("{} {}", ds.graphs[g].id(), kinds[ki]))
            .collect();
        records.push(
            CaseRecord::new(format!("nested-kinds/K={k}"), "nested-kinds", format!("K={k}"))
                .check(bad.is_empty())
                .detail(bad.join("; ")),
        );
    }
    for (ki, &kind) in kinds.iter().enumerate() {
        let mut rec = CaseRecord::new(format!("trend/{kind}"), "trend", format!("kind={kind}"));
        if let Some(slope) = log_slope(&ks, &prep_ms[ki]) {
            rec.phase_ms.insert("log_slope_per_k".into(), slope);
        }
        records.push(rec);
    }
    Ok(SuiteReport::new(format!("timing-{}", ds.name), Environment::current(cfg.seed), records))
}

fn model_phases(
    ds: &Dataset,
    sets: &[PathSet],
    kind: PathKind,
    k: usize,
    hidden: usize,
    cfg: &TimingConfig,
    rec: &mut CaseRecord,
) -> Result<()> {
    let input_dim = ds.graphs[0].node_features().map_or(1, |f| f.dim().max(1));
    let outputs = match ds.task {
        Task::Classification { num_classes } => num_classes,
        _ => 1,
    };
    let mc = ModelConfig::new(kind, k, hidden, input_dim, outputs);
    let (model, mut store) = PathNN::init(&mc, cfg.seed)?;
    let start = Instant::now();
    let plans = ds.graphs.iter().zip(sets).map(|(g, ps)| compile(g, ps, &mc, false)).collect::<Result<Vec<_>, _>>()?;
    rec.phase_ms.insert("compile".into(), start.elapsed().as_secs_f64() * 1e3);
    let refs: Vec<_> = plans.iter().collect();
    if ds.task != Task::None && ds.graphs.iter().all(|g| g.label().is_some()) {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        train_epoch(&model, &mut store, &refs, ds.task, cfg.batch_size, 1e-3, &mut rng)?;
        rec.phase_ms.insert("train_epoch".into(), start.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        evaluate(&model, &store, &refs, ds.task, cfg.batch_size)?;
        rec.phase_ms.insert("inference".into(), start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(())
}

/// Least-squares slope of `ln(ms)` against K; `None` with fewer than two
/// positive points.
fn log_slope(ks: &[usize], ms: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ks.iter().zip(ms).filter(|(_, &m)| m > 0.0).map(|(&k, &m)| (k as f64, m.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// The per-(kind, K) path counts of a timing report.
pub fn path_count_table(report: &SuiteReport) -> Vec<PathCountRow> {
    report
        .records
        .iter()
        .filter(|r| r.group == "paths")
        .filter_map(|r| {
            let mut parts = r.config.split(' ');
            let kind = parts.next()?.strip_prefix("kind=")?.to_string();
            let k = parts.next()?.strip_prefix("K=")?.parse().ok()?;
            Some(PathCountRow { kind, k, mean_paths_per_graph: r.metric.unwrap_or(0.0) })
        })
        .collect()
}

/// CSV with columns `kind, K, mean_paths_per_graph`.
pub fn path_count_csv(report: &SuiteReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in path_count_table(report) {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}
