//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Objective: mean cross-entropy against target rows plus (λ/2)‖W‖²_F, with
//! W of shape C×d. Targets may be one-hot, soft, or the mixture
//! ξ·y_T + (1−ξ)·y used for distillation (which can have negative entries
//! when ξ > 1).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub step_size: f64,
    pub epochs: usize,
    /// Stop early once the gradient Frobenius norm drops below this.
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            epochs: 500,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub weights: DMatrix<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub epochs_run: usize,
    /// Step size in effect at exit, after any halvings.
    pub step_size: f64,
}

/// Row-wise softmax of `logits`, in place.
pub fn softmax_rows(logits: &mut DMatrix<f64>) {
    for mut row in logits.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Class probabilities for every row of `features` (N×d) under weights (C×d).
pub fn predict_proba(features: &DMatrix<f64>, weights: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = features * weights.transpose();
    softmax_rows(&mut p);
    p
}

pub fn predict(features: &DMatrix<f64>, weights: &DMatrix<f64>) -> Vec<usize> {
    let logits = features * weights.transpose();
    logits
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(features: &DMatrix<f64>, weights: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let pred = predict(features, weights);
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    let mut t = DMatrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        t[(i, l)] = 1.0;
    }
    Ok(t)
}

/// Stable log-softmax of one row: logits − logsumexp.
fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Mean cross-entropy against `targets` plus (λ/2)‖W‖²_F.
pub fn loss(features: &DMatrix<f64>, targets: &DMatrix<f64>, weights: &DMatrix<f64>, lambda: f64) -> f64 {
    let logits = features * weights.transpose();
    let n = features.nrows();
    let c = weights.nrows();
    let mut total = 0.0;
    let mut row = vec![0.0; c];
    for i in 0..n {
        for j in 0..c {
            row[j] = logits[(i, j)];
        }
        let lp = log_softmax_row(&row);
        for j in 0..c {
            let t = targets[(i, j)];
            if t != 0.0 {
                total -= t * lp[j];
            }
        }
    }
    total / n as f64 + 0.5 * lambda * weights.norm_squared()
}

/// (loss, gradient) with gradient (P − T)ᵀX/N + λW.
pub fn loss_and_grad(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    lambda: f64,
) -> (f64, DMatrix<f64>) {
    let n = features.nrows() as f64;
    let mut p = predict_proba(features, weights);
    let value = loss(features, targets, weights, lambda);
    p -= targets;
    let grad = p.transpose() * features / n + weights * lambda;
    (value, grad)
}

fn check(features: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64, opts: &FitOptions) -> Result<()> {
    if features.nrows() == 0 || features.nrows() != targets.nrows() {
        return Err(Error::invalid("features and targets need the same non-zero row count"));
    }
    if targets.ncols() < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if opts.epochs == 0 || !(opts.step_size > 0.0) {
        return Err(Error::invalid("need at least one epoch and a positive step size"));
    }
    for (i, row) in targets.row_iter().enumerate() {
        if (row.sum() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("target row {i} does not sum to 1")));
        }
    }
    Ok(())
}

/// Full-batch gradient descent from W = 0. A step that raises the loss is
/// retried with half the step size; the reduced step is kept afterwards.
pub fn fit_softmax(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FitReport> {
    check(features, targets, lambda, opts)?;
    let mut w = DMatrix::zeros(targets.ncols(), features.ncols());
    let (mut value, mut grad) = loss_and_grad(features, targets, &w, lambda);
    if !value.is_finite() {
        return Err(Error::StepSize("initial loss is not finite".into()));
    }
    let mut step = opts.step_size;
    let mut epochs_run = 0;
    for _ in 0..opts.epochs {
        if grad.norm() <= opts.grad_tol {
            break;
        }
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &w - &grad * step;
            let (tv, tg) = loss_and_grad(features, targets, &trial, lambda);
            if tv.is_finite() && tv <= value {
                w = trial;
                value = tv;
                grad = tg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::StepSize(format!(
                "no decreasing step after {MAX_HALVINGS} halvings (loss {value})"
            )));
        }
        epochs_run += 1;
    }
    Ok(FitReport {
        grad_norm: grad.norm(),
        weights: w,
        loss: value,
        epochs_run,
        step_size: step,
    })
}

/// Try each step size and keep the fit with the lowest final training loss.
/// Ties go to the earlier entry of the grid.
pub fn fit_softmax_tuned(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    lambda: f64,
    opts: &FitOptions,
    step_grid: &[f64],
) -> Result<FitReport> {
    if step_grid.is_empty() {
        return Err(Error::invalid("step-size grid is empty"));
    }
    let mut best: Option<FitReport> = None;
    for &lr in step_grid {
        let r = fit_softmax(features, targets, lambda, &FitOptions { step_size: lr, ..*opts })?;
        if best.as_ref().is_none_or(|b| r.loss < b.loss) {
            best = Some(r);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// ξ·y_T + (1−ξ)·onehot(y).
pub fn mixed_targets(hard: &[usize], teacher: &DMatrix<f64>, xi: f64) -> Result<DMatrix<f64>> {
    if hard.len() != teacher.nrows() {
        return Err(Error::invalid("teacher predictions and labels differ in length"));
    }
    let y = one_hot(hard, teacher.ncols())?;
    Ok(teacher * xi + y * (1.0 - xi))
}

/// Distillation objective ξ·CE(y_T, ·) + (1−ξ)·CE(y, ·) + ridge.
pub fn distill(
    features: &DMatrix<f64>,
    hard: &[usize],
    teacher: &DMatrix<f64>,
    xi: f64,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FitReport> {
    if !xi.is_finite() {
        return Err(Error::invalid("xi must be finite"));
    }
    let t = mixed_targets(hard, teacher, xi)?;
    fit_softmax(features, &t, lambda, opts)
}

/// The distillation objective and gradient assembled from its two separate
/// cross-entropy terms rather than from the mixed target.
pub fn distill_loss_and_grad(
    features: &DMatrix<f64>,
    hard: &[usize],
    teacher: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    xi: f64,
    lambda: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let y = one_hot(hard, teacher.ncols())?;
    let (lt, gt) = loss_and_grad(features, teacher, weights, 0.0);
    let (ly, gy) = loss_and_grad(features, &y, weights, 0.0);
    let value = xi * lt + (1.0 - xi) * ly + 0.5 * lambda * weights.norm_squared();
    let grad = gt * xi + gy * (1.0 - xi) + weights * lambda;
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sum_to_one() {
        let mut m = DMatrix::from_row_slice(2, 3, &[1000.0, 0.0, -1000.0, 0.1, 0.2, 0.3]);
        softmax_rows(&mut m);
        for r in m.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        assert!(m.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn heavy_ridge_shrinks_weights() {
        let x = DMatrix::from_fn(20, 4, |i, j| ((i * 3 + j) % 5) as f64 - 2.0);
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let t = one_hot(&y, 3).unwrap();
        let r = fit_softmax(&x, &t, 1e6, &FitOptions::default()).unwrap();
        assert!(r.weights.norm() <= 1e-3);
    }

    #[test]
    fn rejects_bad_targets() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let t = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 1.0, 0.0]);
        assert!(fit_softmax(&x, &t, 1.0, &FitOptions::default()).is_err());
        assert!(one_hot(&[3], 2).is_err());
    }

    #[test]
    fn tuned_picks_lowest_loss() {
        let x = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 2) % 9) as f64 / 4.0 - 1.0);
        let y: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let t = one_hot(&y, 2).unwrap();
        let opts = FitOptions {
            epochs: 20,
            ..Default::default()
        };
        let best = fit_softmax_tuned(&x, &t, 0.01, &opts, &[0.001, 0.5]).unwrap();
        let slow = fit_softmax(&x, &t, 0.01, &FitOptions { step_size: 0.001, ..opts }).unwrap();
        assert!(best.loss <= slow.loss);
    }
}
