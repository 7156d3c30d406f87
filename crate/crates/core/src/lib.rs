//! Self-distillation under label noise.
//!
//! * [`spectral_ridge`]: ridge teacher and student, closed-form bias and variance.
//! * [`lambda_tuning`]: optimal imitation parameter and the e_reg / e_sd curves over λ.
//! * [`logit_fixedpoint`]: teacher and student dual fixed points for binary logistic regression with flipped labels.
//! * [`kernel_sim`]: kernel logistic regression on random block Gram matrices.
//! * [`probe`]: multi-class softmax distillation on feature matrices with label corruption.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernel_sim;
pub mod lambda_tuning;
pub mod logit_fixedpoint;
pub mod probe;
pub mod rng;
pub mod spectral_ridge;

pub use error::{Error, Result};
