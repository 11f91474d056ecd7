use pathlab_core::{Label, Task};

use crate::error::{NeuralError, Result};

/// Mean loss over a batch, its gradient with respect to the predictions,
/// and the task metric (accuracy or mean absolute error).
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub metric: f64,
}

/// Softmax cross-entropy averaged over rows of `logits`.
pub fn cross_entropy(logits: &[f64], targets: &[usize], classes: usize) -> Result<LossReport> {
    if classes == 0 || logits.len() != targets.len() * classes {
        return Err(NeuralError::ShapeMismatch(format!(
            "{} logits for {} targets over {classes} classes",
            logits.len(),
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(NeuralError::ShapeMismatch(format!("target {t} outside {classes} classes")));
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[t];
        for (j, g) in grad[r * classes..(r + 1) * classes].iter_mut().enumerate() {
            *g = ((row[j] - log_z).exp() - if j == t { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok(LossReport { loss: loss / n, grad, metric: accuracy(logits, targets, classes)? })
}

/// Mean absolute error over single-output predictions.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<LossReport> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NeuralError::ShapeMismatch(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| if p > t { 1.0 / n } else if p < t { -1.0 / n } else { 0.0 })
        .collect();
    Ok(LossReport { loss, grad, metric: loss })
}

/// First index of the largest value in each row.
pub fn argmax(logits: &[f64], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| row.iter().enumerate().fold(0, |best, (j, &x)| if x > row[best] { j } else { best }))
        .collect()
}

pub fn accuracy(logits: &[f64], targets: &[usize], classes: usize) -> Result<f64> {
    if logits.len() != targets.len() * classes || targets.is_empty() {
        return Err(NeuralError::ShapeMismatch("logits and targets disagree".into()));
    }
    let hits = argmax(logits, classes).iter().zip(targets).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / targets.len() as f64)
}

/// Loss and metric for `task`, with labels taken from the graphs.
pub fn loss_and_metrics(pred: &[f64], labels: &[Option<Label>], task: Task) -> Result<LossReport> {
    match task {
        Task::Classification { num_classes } => {
            let targets = labels
                .iter()
                .map(|l| match l {
                    Some(Label::Class(c)) => Ok(*c),
                    other => Err(NeuralError::ShapeMismatch(format!("expected a class label, got {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            cross_entropy(pred, &targets, num_classes)
        }
        Task::Regression => {
            let targets = labels
                .iter()
                .map(|l| match l {
                    Some(Label::Real(y)) => Ok(*y),
                    other => Err(NeuralError::ShapeMismatch(format!("expected a real label, got {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            l1_loss(pred, &targets)
        }
        Task::None => Err(NeuralError::Config("dataset has no task".into())),
    }
}
