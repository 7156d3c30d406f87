//! Teacher on corrupted labels, then one student per imitation weight ξ.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt_labels, CorruptionContext, CorruptionKind, CorruptionSpec};
use super::softmax::{accuracy, fit_softmax, fit_softmax_tuned, mixed_targets, one_hot, predict_proba, FitOptions, FitReport};
use super::FeatureDataset;
use crate::error::{Error, Result};

/// Step sizes tried when tuning by lowest training loss.
pub const DEFAULT_STEP_GRID: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub fit: FitOptions,
    /// When non-empty, each fit tries every step size and keeps the lowest training loss.
    pub step_grid: Vec<f64>,
}

impl ProbeConfig {
    pub fn new(lambda: f64, fit: FitOptions) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if fit.epochs == 0 {
            return Err(Error::invalid("need at least one epoch"));
        }
        Ok(Self {
            lambda,
            fit,
            step_grid: Vec::new(),
        })
    }

    fn fit(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<FitReport> {
        if self.step_grid.is_empty() {
            fit_softmax(x, t, self.lambda, &self.fit)
        } else {
            fit_softmax_tuned(x, t, self.lambda, &self.fit, &self.step_grid)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub xi: f64,
    pub teacher_test_acc: f64,
    pub student_test_acc: f64,
    pub improvement: f64,
    /// (teacher range, student range) of the true-class probability, per class.
    pub per_class_variability: Vec<(f64, f64)>,
}

impl ProbeResult {
    /// Mean over classes of the (teacher, student) ranges.
    pub fn mean_variability(&self) -> (f64, f64) {
        let k = self.per_class_variability.len() as f64;
        let (t, s) = self
            .per_class_variability
            .iter()
            .fold((0.0, 0.0), |(a, b), &(t, s)| (a + t, b + s));
        (t / k, s / k)
    }
}

/// Max minus min of the true-class probability over the samples of `class`.
pub fn per_class_variability(predictions: &DMatrix<f64>, labels: &[usize], class: usize) -> Result<f64> {
    if predictions.nrows() != labels.len() {
        return Err(Error::invalid("predictions and labels differ in length"));
    }
    if class >= predictions.ncols() {
        return Err(Error::invalid(format!("class {class} out of range")));
    }
    let (lo, hi) = labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l == class)
        .map(|(i, _)| predictions[(i, class)])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return Err(Error::invalid(format!("class {class} has no samples")));
    }
    Ok(hi - lo)
}

/// ν_c: mean predicted probability vector over the samples labelled c.
pub fn confusion_profile(probs: &DMatrix<f64>, labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    let mut nu = vec![vec![0.0; classes]; classes];
    let mut count = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        count[l] += 1;
        for (j, v) in nu[l].iter_mut().enumerate() {
            *v += probs[(i, j)];
        }
    }
    for (c, row) in nu.iter_mut().enumerate() {
        if count[c] == 0 {
            return Err(Error::invalid(format!("class {c} has no training samples")));
        }
        row.iter_mut().for_each(|v| *v /= count[c] as f64);
    }
    Ok(nu)
}

/// Train one teacher on the corrupted training labels, then one student per
/// ξ against the fixed teacher probabilities. Accuracy is measured on the
/// clean test labels.
pub fn xi_sweep(
    data: &FeatureDataset,
    corruption: &CorruptionSpec,
    xi_grid: &[f64],
    config: &ProbeConfig,
) -> Result<Vec<ProbeResult>> {
    if xi_grid.is_empty() {
        return Err(Error::invalid("xi grid is empty"));
    }
    if data.test.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    let c = data.classes;
    let x_train = data.train_features();
    let x_test = data.test_features();
    let y_train = data.train_labels();
    let y_test = data.test_labels();

    let confusion = if corruption.kind == CorruptionKind::Adversarial {
        let clean = config.fit(&x_train, &one_hot(&y_train, c)?)?;
        Some(confusion_profile(&predict_proba(&x_train, &clean.weights), &y_train, c)?)
    } else {
        None
    };
    let ctx = CorruptionContext {
        superclass: data.superclass.as_deref(),
        confusion: confusion.as_deref(),
    };
    let noisy = corrupt_labels(&y_train, c, corruption, ctx)?;

    let teacher = config.fit(&x_train, &one_hot(&noisy, c)?)?;
    let teacher_train = predict_proba(&x_train, &teacher.weights);
    let teacher_test = predict_proba(&x_test, &teacher.weights);
    let teacher_acc = accuracy(&x_test, &teacher.weights, &y_test);

    xi_grid
        .par_iter()
        .map(|&xi| {
            if !xi.is_finite() {
                return Err(Error::invalid("xi must be finite"));
            }
            let student = config.fit(&x_train, &mixed_targets(&noisy, &teacher_train, xi)?)?;
            let student_test = predict_proba(&x_test, &student.weights);
            let student_acc = accuracy(&x_test, &student.weights, &y_test);
            let per_class_variability = (0..c)
                .map(|k| {
                    Ok((
                        per_class_variability(&teacher_test, &y_test, k)?,
                        per_class_variability(&student_test, &y_test, k)?,
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(ProbeResult {
                xi,
                teacher_test_acc: teacher_acc,
                student_test_acc: student_acc,
                improvement: student_acc - teacher_acc,
                per_class_variability,
            })
        })
        .collect()
}
