//! Cross-validated training runs and gradient-check sweeps.

use std::time::Instant;

use pathlab_core::generate::{csl_dataset, er_random};
use pathlab_core::{Dataset, EdgeFeatures, Graph, PathKind, Task};
use pathlab_neural::gradcheck::{grad_compare, DEFAULT_STEP, DEFAULT_TOLERANCE};
use pathlab_neural::train::{cross_validate, TrainConfig};
use pathlab_neural::{Aggregation, CellVariant, Head, ModelConfig, Norm, Phi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::report::{run_cases, CaseFn, CaseRecord, Environment, SuiteReport};

/// Relabelled copies per CSL class in the training set.
pub const CSL_COPIES: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    /// Row name in the report, e.g. `PathNN-SP+ (K=11)`.
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Least test accuracy in percent every fold must reach; `None` records
    /// the accuracy without checking it.
    pub target: Option<f64>,
}

/// CSL-sized model: one input feature, ten classes, linear head.
pub fn csl_model(kind: PathKind, max_len: usize, hidden: usize) -> ModelConfig {
    ModelConfig::new(kind, max_len, hidden, 1, 10)
}

/// The three CSL rows: SP+ with K = 11, AP with K = 5 (distance cell, batch
/// 8, Euclidean normalization) and SP with K = 11.
pub fn csl_runs(seed: u64) -> Vec<TrainingRun> {
    let tc = TrainConfig { seed, ..TrainConfig::default() };
    let mut ap = csl_model(PathKind::Ap, 5, 64);
    ap.cell = CellVariant::Distance;
    ap.norm = Norm::Euclidean;
    vec![
        TrainingRun { name: "PathNN-SP+ (K=11)".into(), model: csl_model(PathKind::SpPlus, 11, 64), train: tc.clone(), target: Some(100.0) },
        TrainingRun { name: "PathNN-AP (K=5)".into(), model: ap, train: TrainConfig { batch_size: 8, ..tc.clone() }, target: Some(100.0) },
        TrainingRun { name: "PathNN-SP (K=11)".into(), model: csl_model(PathKind::Sp, 11, 64), train: tc, target: None },
    ]
}

pub fn csl_training_set(seed: u64) -> Dataset {
    csl_dataset(CSL_COPIES, seed)
}

/// Cross-validates each run on `ds`; one record per fold with the test
/// accuracy in percent (or the test error for regression) as its metric.
/// Runs execute in parallel; folds within a run are sequential and the
/// fold wall time is the run's wall time split evenly.
pub fn run_training(ds: &Dataset, runs: &[TrainingRun], seed: u64) -> Result<SuiteReport> {
    let results = runs
        .par_iter()
        .map(|run| {
            let start = Instant::now();
            let cv = cross_validate(ds, &run.model, &run.train).map_err(|e| HarnessError::from(e).in_case(&run.name))?;
            Ok((cv, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Vec<Result<_>>>();
    let scale = if matches!(ds.task, Task::Classification { .. }) { 100.0 } else { 1.0 };
    let mut records = Vec::new();
    for (run, result) in runs.iter().zip(results) {
        let (cv, wall_ms) = result?;
        let config = serde_json::to_string(&(&run.model, &run.train))?;
        for f in &cv.folds {
            let metric = f.test_metric * scale;
            let last_loss = f.epoch_losses.last().copied().unwrap_or(f64::NAN);
            let mut r = CaseRecord::new(format!("{}/fold{}", slug(&run.name), f.fold), &run.name, config.clone())
                .metric(metric)
                .detail(format!("train {:.4}, final loss {last_loss:.6e}", f.train_metric * scale));
            if let Some(t) = run.target {
                r = r.check(metric >= t);
            }
            r.wall_ms = wall_ms / cv.folds.len().max(1) as f64;
            records.push(r);
        }
    }
    Ok(SuiteReport::new(format!("training-{}", ds.name), Environment::current(seed), records).with_metric_name(ds.name.to_uppercase()))
}

fn slug(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else if c == '+' { 'p' } else { '-' }).collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradVariant {
    Plain,
    Distance,
    Edge,
}

impl GradVariant {
    pub const ALL: [GradVariant; 3] = [GradVariant::Plain, GradVariant::Distance, GradVariant::Edge];

    pub fn cell(self) -> CellVariant {
        match self {
            GradVariant::Plain => CellVariant::Plain,
            GradVariant::Distance => CellVariant::Distance,
            GradVariant::Edge => CellVariant::Edge,
        }
    }
}

impl std::str::FromStr for GradVariant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(GradVariant::Plain),
            "distance" => Ok(GradVariant::Distance),
            "edge" => Ok(GradVariant::Edge),
            _ => Err(HarnessError::Input(format!("unknown cell variant {s:?}"))),
        }
    }
}

/// `er_random(8, 0.4)` with two-dimensional edge features drawn from
/// {0, 1, 2} when `edges` is set.
pub fn gradcheck_graph(edges: bool) -> Result<Graph> {
    let g = er_random(8, 0.4, 1)?;
    if !edges {
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let feats: EdgeFeatures = g.edges().map(|e| (e, (0..2).map(|_| f64::from(rng.gen_range(0..3u8))).collect())).collect();
    Ok(g.with_edge_features(feats)?)
}

/// Central-difference checks of an AP K=3, d=4 model for each variant over
/// φ, aggregation and normalization. Each record passes when no coordinate
/// reaches the relative tolerance.
pub fn run_gradcheck(variants: &[GradVariant], seed: u64) -> Result<SuiteReport> {
    let mut cases: Vec<(String, CaseFn)> = Vec::new();
    for &variant in variants {
        for phi in [Phi::Identity, Phi::Mlp] {
            for agg in [Aggregation::Sum, Aggregation::Mean] {
                for norm in [Norm::None, Norm::Euclidean, Norm::BatchNorm] {
                    let mut cfg = ModelConfig::new(PathKind::Ap, 3, 4, 1, 3);
                    cfg.cell = variant.cell();
                    cfg.phi = phi;
                    cfg.path_agg = agg;
                    cfg.readout = agg;
                    cfg.norm = norm;
                    cfg.head = Head::Linear;
                    cfg.edge_dim = if cfg.cell.uses_edges() { 2 } else { 0 };
                    let id = format!("{variant:?}/{phi:?}/{agg:?}/{norm:?}").to_lowercase();
                    let rid = id.clone();
                    cases.push((id, Box::new(move || {
                        let g = gradcheck_graph(cfg.cell.uses_edges())?;
                        let r = grad_compare(&g, &cfg, seed, DEFAULT_STEP, DEFAULT_TOLERANCE)?;
                        Ok(CaseRecord::new(&rid, format!("{variant:?}").to_lowercase(), serde_json::to_string(&cfg)?)
                            .check(r.violations.is_empty())
                            .metric(r.worst_rel_error)
                            .detail(format!(
                                "{} checked, {} skipped, worst {}[{}], {} violations",
                                r.checked,
                                r.skipped,
                                r.worst_param,
                                r.worst_index,
                                r.violations.len()
                            )))
                    })));
                }
            }
        }
    }
    Ok(SuiteReport::new("gradcheck", Environment::current(seed), run_cases(cases)?))
}
