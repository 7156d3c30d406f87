//! Linear probing with self-distillation on fixed feature matrices.

pub mod corrupt;
pub mod io;
pub mod softmax;
pub mod sweep;
pub mod synthetic;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub use corrupt::{corrupt_labels, hard_classes, CorruptionContext, CorruptionKind, CorruptionSpec};
pub use softmax::{distill, fit_softmax, FitOptions, FitReport};
pub use sweep::{confusion_profile, per_class_variability, xi_sweep, ProbeConfig, ProbeResult};
pub use synthetic::{gaussian_clusters, SyntheticSpec};

/// Stream id used to shuffle a holdout split.
const SPLIT_STREAM: u64 = 50;

/// Features (N×d), labels in 0..classes, and a train/test split.
#[derive(Debug, Clone)]
pub struct FeatureDataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub superclass: Option<Vec<usize>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FeatureDataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        classes: usize,
        superclass: Option<Vec<usize>>,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::invalid(format!("{n} feature rows but {} labels", labels.len())));
        }
        if classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        if let Some(sup) = &superclass {
            if sup.len() != classes {
                return Err(Error::invalid("superclass map must cover every class"));
            }
        }
        if train.is_empty() {
            return Err(Error::invalid("training split is empty"));
        }
        let mut seen = vec![0u8; n];
        for &i in &train {
            if i >= n || seen[i] != 0 {
                return Err(Error::invalid("training indices out of range or repeated"));
            }
            seen[i] = 1;
        }
        for &i in &test {
            if i >= n || seen[i] != 0 {
                return Err(Error::invalid("test indices out of range or overlap the training split"));
            }
            seen[i] = 2;
        }
        Ok(Self {
            features,
            labels,
            classes,
            superclass,
            train,
            test,
        })
    }

    /// Random holdout split with `test_fraction` of the rows held out.
    pub fn with_holdout(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        classes: usize,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::invalid("test fraction must lie in [0, 1)"));
        }
        let n = features.nrows();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
        let n_test = (n as f64 * test_fraction).round() as usize;
        let test = idx[..n_test].to_vec();
        let train = idx[n_test..].to_vec();
        Self::new(features, labels, classes, None, train, test)
    }

    fn rows(&self, idx: &[usize]) -> DMatrix<f64> {
        self.features.select_rows(idx)
    }

    pub fn train_features(&self) -> DMatrix<f64> {
        self.rows(&self.train)
    }

    pub fn test_features(&self) -> DMatrix<f64> {
        self.rows(&self.test)
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test.iter().map(|&i| self.labels[i]).collect()
    }
}
