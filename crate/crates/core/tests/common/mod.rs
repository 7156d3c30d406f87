//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sd_lab::spectral_ridge::{DenseRidgeProblem, SpectralDesign};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Random dense problem with d ≤ 10, n ≤ 30 and λ in [0.2, 2].
pub fn random_problem(seed: u64) -> DenseRidgeProblem {
    let mut r = rng(seed);
    let d = r.random_range(2..=10);
    let n = r.random_range(2..=30);
    let x = normal_matrix(&mut r, d, n);
    let theta = normal_vector(&mut r, d);
    let gamma = r.random_range(0.05..1.0);
    let lambda = r.random_range(0.2..2.0);
    DenseRidgeProblem::new(x, theta, gamma, lambda, seed).unwrap()
}

/// Random spectral design with 1 ≤ r ≤ 6 and σ in (0.05, 2].
pub fn random_design(seed: u64) -> SpectralDesign {
    let mut r = rng(seed);
    let rank = r.random_range(1..=6);
    let mut sigma: Vec<f64> = (0..rank).map(|_| r.random_range(0.05..2.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let s: Vec<f64> = (0..rank).map(|_| r.sample(StandardNormal)).collect();
    let null: f64 = r.random_range(0.0..0.5);
    SpectralDesign::new(sigma, s, null, rank + 2).unwrap()
}

/// Upper bound on the largest eigenvalue of XXᵀ.
fn lipschitz(x: &DMatrix<f64>) -> f64 {
    x.norm_squared()
}

/// Gradient descent on ½‖Xᵀθ − target‖² + (λ/2)‖θ‖² until the gradient vanishes.
pub fn gd_least_squares(x: &DMatrix<f64>, target: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let step = 1.0 / (lipschitz(x) + lambda);
    let mut theta = DVector::zeros(x.nrows());
    for _ in 0..500_000 {
        let grad = x * (x.tr_mul(&theta) - target) + &theta * lambda;
        if grad.norm() < 1e-13 {
            break;
        }
        theta -= grad * step;
    }
    theta
}

/// Gradient descent on the teacher objective ½‖Xᵀθ − Y‖² + (λ/2)‖θ‖².
pub fn gd_teacher(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    gd_least_squares(x, y, lambda)
}

/// Gradient descent on the student objective
/// (ξ/2)‖Xᵀθ − Xᵀθ_T‖² + ((1−ξ)/2)‖Xᵀθ − Y‖² + (λ/2)‖θ‖².
pub fn gd_student(x: &DMatrix<f64>, y: &DVector<f64>, teacher: &DVector<f64>, xi: f64, lambda: f64) -> DVector<f64> {
    let step = 1.0 / (lipschitz(x) + lambda);
    let soft = x.tr_mul(teacher);
    let mut theta = DVector::zeros(x.nrows());
    for _ in 0..500_000 {
        let fit = x.tr_mul(&theta);
        let grad = x * ((&fit - &soft) * xi + (&fit - y) * (1.0 - xi)) + &theta * lambda;
        if grad.norm() < 1e-13 {
            break;
        }
        theta -= grad * step;
    }
    theta
}

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Bisection for a root of a continuous function with a sign change on [lo, hi].
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
