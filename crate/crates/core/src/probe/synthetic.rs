//! Gaussian-cluster benchmark standing in for pre-extracted deep features.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FeatureDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Expected norm of each class mean; samples add unit isotropic noise.
    pub separation: f64,
    /// Group consecutive classes into superclasses of this size.
    pub superclass_size: Option<usize>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 50,
            train_per_class: 500,
            test_per_class: 2000,
            separation: 2.0,
            superclass_size: None,
            seed: 0,
        }
    }
}

/// Class means drawn from N(0, separation²/dim · I); samples are mean + N(0, I).
/// Training rows come first, grouped by class, then test rows.
pub fn gaussian_clusters(spec: &SyntheticSpec) -> Result<FeatureDataset> {
    if spec.classes < 2 || spec.dim == 0 || spec.train_per_class == 0 {
        return Err(Error::invalid("need two classes, one dimension and one training sample per class"));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(Error::invalid("separation must be non-negative"));
    }
    let (c, d) = (spec.classes, spec.dim);
    let scale = spec.separation / (d as f64).sqrt();
    let mut rng = stream_rng(spec.seed, stream::SYNTHETIC_MEANS);
    let means = DMatrix::from_fn(c, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));

    let n_train = c * spec.train_per_class;
    let n_test = c * spec.test_per_class;
    let mut features = DMatrix::zeros(n_train + n_test, d);
    let mut labels = Vec::with_capacity(n_train + n_test);
    let mut row = 0;
    for (per_class, id) in [
        (spec.train_per_class, stream::SYNTHETIC_TRAIN),
        (spec.test_per_class, stream::SYNTHETIC_TEST),
    ] {
        let mut rng = stream_rng(spec.seed, id);
        for class in 0..c {
            for _ in 0..per_class {
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    features[(row, j)] = means[(class, j)] + z;
                }
                labels.push(class);
                row += 1;
            }
        }
    }
    let superclass = match spec.superclass_size {
        Some(0) => return Err(Error::invalid("superclass size must be positive")),
        Some(s) => Some((0..c).map(|k| k / s).collect()),
        None => None,
    };
    FeatureDataset::new(
        features,
        labels,
        c,
        superclass,
        (0..n_train).collect(),
        (n_train..n_train + n_test).collect(),
    )
}
