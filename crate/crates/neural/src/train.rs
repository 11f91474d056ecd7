//! Minibatch training with Adam and stratified k-fold cross-validation.

use pathlab_core::paths::enumerate_paths;
use pathlab_core::{Dataset, Label, Task};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{NeuralError, Result};
use crate::loss::loss_and_metrics;
use crate::model::{Mode, PathNN};
use crate::params::{AdamConfig, ParamStore};
use crate::plan::{compile, GraphPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub folds: usize,
    pub budget: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-3, epochs: 200, batch_size: 32, seed: 0, folds: 5, budget: pathlab_core::paths::DEFAULT_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub train_metric: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

/// Test indices of each fold. Classes are shuffled separately and dealt
/// round-robin, so every fold gets a near-equal share of each class.
pub fn stratified_folds(labels: &[Option<Label>], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > labels.len() {
        return Err(NeuralError::Config(format!("{folds} folds for {} graphs", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: std::collections::BTreeMap<Option<usize>, Vec<usize>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        let key = match l {
            Some(Label::Class(c)) => Some(*c),
            _ => None,
        };
        groups.entry(key).or_default().push(i);
    }
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            out[next % folds].push(i);
            next += 1;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

fn labels_of(plans: &[&GraphPlan]) -> Vec<Option<Label>> {
    plans.iter().map(|p| p.label()).collect()
}

/// Metric of the model over `plans` in eval mode.
pub fn evaluate(model: &PathNN, store: &ParamStore, plans: &[&GraphPlan], task: Task, batch_size: usize) -> Result<f64> {
    let mut weighted = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in plans.chunks(batch_size.max(1)) {
        let tape = model.forward(store, chunk, Mode::Eval, &mut rng)?;
        let r = loss_and_metrics(tape.logits(), &labels_of(chunk), task)?;
        weighted += r.metric * chunk.len() as f64;
    }
    Ok(weighted / plans.len().max(1) as f64)
}

/// One epoch of shuffled minibatch Adam steps; returns the mean batch loss.
pub fn train_epoch(
    model: &PathNN,
    store: &mut ParamStore,
    plans: &[&GraphPlan],
    task: Task,
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(batch_size.max(1)) {
        let batch: Vec<&GraphPlan> = chunk.iter().map(|&i| plans[i]).collect();
        let tape = model.forward(store, &batch, Mode::Train, rng)?;
        let r = loss_and_metrics(tape.logits(), &labels_of(&batch), task)?;
        if !r.loss.is_finite() {
            return Err(NeuralError::NonFinite("training loss".into()));
        }
        let grads = model.backward(store, &tape, &r.grad)?;
        store.adam_step(&grads, AdamConfig::with_lr(lr))?;
        model.update_running_stats(store, &tape);
        total += r.loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

/// Trains a fresh model on `train` and reports the final-epoch metrics.
pub fn train_and_test(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    task: Task,
    train: &[&GraphPlan],
    train_eval: &[&GraphPlan],
    test: &[&GraphPlan],
    seed: u64,
) -> Result<(FoldResult, PathNN, ParamStore)> {
    let (model, mut store) = PathNN::init(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11);
    let mut epoch_losses = Vec::with_capacity(tc.epochs);
    for _ in 0..tc.epochs {
        epoch_losses.push(train_epoch(&model, &mut store, train, task, tc.batch_size, tc.lr, &mut rng)?);
    }
    let train_metric = evaluate(&model, &store, train_eval, task, tc.batch_size)?;
    let test_metric = if test.is_empty() { f64::NAN } else { evaluate(&model, &store, test, task, tc.batch_size)? };
    Ok((FoldResult { fold: 0, epoch_losses, train_metric, test_metric }, model, store))
}

/// Enumerates paths once per graph and compiles training and evaluation
/// plans (they coincide unless dropout is active).
pub fn compile_dataset(ds: &Dataset, cfg: &ModelConfig, budget: usize) -> Result<(Vec<GraphPlan>, Vec<GraphPlan>)> {
    let mut train = Vec::with_capacity(ds.len());
    let mut eval = Vec::new();
    for g in &ds.graphs {
        let ps = enumerate_paths(g, cfg.kind, cfg.max_len, budget)?;
        if cfg.dropout > 0.0 {
            train.push(compile(g, &ps, cfg, true)?);
            eval.push(compile(g, &ps, cfg, false)?);
        } else {
            train.push(compile(g, &ps, cfg, false)?);
        }
    }
    if eval.is_empty() {
        eval = train.clone();
    }
    Ok((train, eval))
}

/// Stratified k-fold cross-validation; each fold trains a model seeded with
/// `seed + fold` and reports its test metric after the last epoch.
pub fn cross_validate(ds: &Dataset, cfg: &ModelConfig, tc: &TrainConfig) -> Result<CrossValidation> {
    let labels: Vec<Option<Label>> = ds.graphs.iter().map(|g| g.label()).collect();
    if labels.iter().any(Option::is_none) {
        return Err(NeuralError::Config("every graph needs a label".into()));
    }
    let (train_plans, eval_plans) = compile_dataset(ds, cfg, tc.budget)?;
    let folds = stratified_folds(&labels, tc.folds, tc.seed)?;
    let mut results = Vec::with_capacity(folds.len());
    for (f, test_idx) in folds.iter().enumerate() {
        let in_test: std::collections::BTreeSet<usize> = test_idx.iter().copied().collect();
        let train_idx: Vec<usize> = (0..ds.len()).filter(|i| !in_test.contains(i)).collect();
        let train: Vec<&GraphPlan> = train_idx.iter().map(|&i| &train_plans[i]).collect();
        let train_eval: Vec<&GraphPlan> = train_idx.iter().map(|&i| &eval_plans[i]).collect();
        let test: Vec<&GraphPlan> = test_idx.iter().map(|&i| &eval_plans[i]).collect();
        let (mut r, _, _) = train_and_test(cfg, tc, ds.task, &train, &train_eval, &test, tc.seed.wrapping_add(f as u64))?;
        r.fold = f;
        results.push(r);
    }
    let (mean, std) = mean_std(&results.iter().map(|r| r.test_metric).collect::<Vec<_>>());
    Ok(CrossValidation { folds: results, mean, std })
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
