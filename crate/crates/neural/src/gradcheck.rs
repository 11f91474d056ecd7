//! Central finite-difference check of the analytic gradients.

use pathlab_core::paths::{enumerate_paths, DEFAULT_BUDGET};
use pathlab_core::Graph;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{NeuralError, Result};
use crate::model::{Mode, PathNN};
use crate::params::{ParamId, ParamStore};
use crate::plan::GraphPlan;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Coordinates whose analytic gradient is at most this large are skipped.
pub const MIN_GRADIENT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_rel_error: f64,
    /// Coordinates at or above the tolerance.
    pub violations: Vec<Violation>,
}

/// Fails with the worst coordinate unless every checked coordinate is
/// within `tol`; see [`compare_gradients`].
pub fn check_gradients(
    model: &PathNN,
    store: &ParamStore,
    plans: &[&GraphPlan],
    mode: Mode,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let report = compare_gradients(model, store, plans, mode, seed, step, tol)?;
    if !report.violations.is_empty() {
        return Err(NeuralError::GradCheckFailed {
            param: report.worst_param,
            index: report.worst_index,
            rel_error: report.worst_rel_error,
        });
    }
    Ok(report)
}

/// Compares every parameter coordinate with central differences of the
/// scalar `Σ w_i · logit_i`, with `w` drawn from `seed`. In train mode the
/// dropout generator is reseeded before every pass, so all passes see the
/// same masks.
pub fn compare_gradients(
    model: &PathNN,
    store: &ParamStore,
    plans: &[&GraphPlan],
    mode: Mode,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let weights = logit_weights(model, plans, seed);
    let loss = |s: &ParamStore| probe_loss(model, s, plans, mode, seed, &weights);
    let tape = model.forward(store, plans, mode, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))?;
    let grads = model.backward(store, &tape, &weights)?;

    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        worst_param: String::new(),
        worst_index: 0,
        worst_rel_error: 0.0,
        violations: Vec::new(),
    };
    let mut probe = store.clone();
    let ids: Vec<_> = store.iter().map(|(id, name, _)| (id, name.to_string())).collect();
    for (id, name) in ids {
        for i in 0..store.get(id).len() {
            let analytic = grads.get(id).data()[i];
            if analytic.abs() <= MIN_GRADIENT {
                report.skipped += 1;
                continue;
            }
            let original = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = original + step;
            let up = loss(&probe)?;
            probe.get_mut(id).data_mut()[i] = original - step;
            let down = loss(&probe)?;
            probe.get_mut(id).data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * step);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            report.checked += 1;
            if rel >= tol {
                report.violations.push(Violation { param: name.clone(), index: i, analytic, numeric, rel_error: rel });
            }
            if rel > report.worst_rel_error || report.worst_param.is_empty() {
                report.worst_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

fn logit_weights(model: &PathNN, plans: &[&GraphPlan], seed: u64) -> Vec<f64> {
    let n_out = plans.len() * model.config().num_outputs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn probe_loss(model: &PathNN, store: &ParamStore, plans: &[&GraphPlan], mode: Mode, seed: u64, weights: &[f64]) -> Result<f64> {
    let tape = model.forward(store, plans, mode, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))?;
    Ok(tape.logits().iter().zip(weights).map(|(a, b)| a * b).sum())
}

/// Central difference of the probe scalar of [`compare_gradients`] along
/// one coordinate.
#[allow(clippy::too_many_arguments)]
pub fn central_difference(
    model: &PathNN,
    store: &ParamStore,
    plans: &[&GraphPlan],
    mode: Mode,
    seed: u64,
    id: ParamId,
    index: usize,
    step: f64,
) -> Result<f64> {
    let weights = logit_weights(model, plans, seed);
    let mut probe = store.clone();
    let original = store.get(id).data()[index];
    probe.get_mut(id).data_mut()[index] = original + step;
    let up = probe_loss(model, &probe, plans, mode, seed, &weights)?;
    probe.get_mut(id).data_mut()[index] = original - step;
    let down = probe_loss(model, &probe, plans, mode, seed, &weights)?;
    Ok((up - down) / (2.0 * step))
}

/// Shifts every bias by a seeded draw from `±scale`. Zero biases put exact
/// zeros in front of ReLUs (nodes without paths get a zero update), where
/// the model is not differentiable.
pub fn jitter_biases(store: &mut ParamStore, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.iter().filter(|(_, name, _)| name.ends_with("bias")).map(|(id, _, _)| id).collect();
    for id in ids {
        store.get_mut(id).data_mut().iter_mut().for_each(|b| *b += rng.gen_range(-scale..scale));
    }
}

/// Seeded model on one graph with jittered biases, compared in eval mode so
/// normalization uses frozen statistics. Returns the report with its
/// violations instead of failing.
pub fn grad_compare(g: &Graph, cfg: &ModelConfig, seed: u64, step: f64, tol: f64) -> Result<GradCheckReport> {
    let ps = enumerate_paths(g, cfg.kind, cfg.max_len, DEFAULT_BUDGET)?;
    let (model, mut store) = PathNN::init(cfg, seed)?;
    jitter_biases(&mut store, 0.1, seed);
    let plan = model.compile(g, &ps)?;
    compare_gradients(&model, &store, &[&plan], Mode::Eval, seed, step, tol)
}

/// [`grad_compare`] that fails on the worst violation.
pub fn grad_check(g: &Graph, cfg: &ModelConfig, seed: u64, step: f64, tol: f64) -> Result<GradCheckReport> {
    let report = grad_compare(g, cfg, seed, step, tol)?;
    match report.violations.is_empty() {
        true => Ok(report),
        false => Err(NeuralError::GradCheckFailed {
            param: report.worst_param,
            index: report.worst_index,
            rel_error: report.worst_rel_error,
        }),
    }
}
