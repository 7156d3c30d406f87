mod common;

use approx::assert_relative_eq;
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sd_lab::spectral_ridge::*;

#[test]
fn teacher_and_student_match_gradient_descent() {
    for seed in 0..10 {
        let prob = random_problem(seed);
        let y = prob.clean_labels() + normal_vector(&mut rng(seed + 100), prob.n()) * prob.gamma;
        let teacher = prob.teacher_fit(&y).unwrap();
        let gd_t = gd_teacher(&prob.x, &y, prob.lambda);
        assert!((&teacher - &gd_t).norm() <= 1e-6, "seed {seed}");
        for xi in [-0.5, 0.0, 0.7, 1.0, 1.8] {
            let student = prob.student_fit(&y, &teacher, xi).unwrap();
            let gd_s = gd_student(&prob.x, &y, &gd_t, xi, prob.lambda);
            assert!((&student - &gd_s).norm() <= 1e-6, "seed {seed} xi {xi}");
        }
    }
}

#[test]
fn normal_equation_residual() {
    let prob = random_problem(7);
    let y = prob.clean_labels();
    let t = prob.teacher_fit(&y).unwrap();
    let lhs = &prob.x * prob.x.transpose() * &t + &t * prob.lambda;
    let rhs = &prob.x * &y;
    assert!((lhs - &rhs).norm() <= 1e-10 * rhs.norm());
}

#[test]
fn identity_design_closed_forms() {
    let y = DVector::from_vec(vec![2.0, -4.0, 6.0]);
    let prob = DenseRidgeProblem::new(DMatrix::identity(3, 3), DVector::zeros(3), 0.0, 1.0, 0).unwrap();
    let t = prob.teacher_fit(&y).unwrap();
    assert_relative_eq!(t, &y / 2.0, epsilon = 1e-14);
    let s = prob.student_fit(&y, &t, 1.0).unwrap();
    assert_relative_eq!(s, &t / 2.0, epsilon = 1e-14);
    assert_eq!(prob.student_fit(&y, &t, 0.0).unwrap(), t);
}

#[test]
fn extreme_shrinkage() {
    let prob = random_problem(3);
    let strong = DenseRidgeProblem { lambda: 1e12, ..prob.clone() };
    let y = prob.clean_labels();
    let t = strong.teacher_fit(&y).unwrap();
    assert!(t.norm() <= (&prob.x * &y).norm() / 1e12);
    let design = prob.spectral_basis().unwrap().design;
    assert_relative_eq!(bias_sq(&design, 1e12, 0.4), design.norm_sq(), max_relative = 1e-9);
}

#[test]
fn hand_evaluations() {
    let one = SpectralDesign::new(vec![1.0], vec![1.0], 0.0, 1).unwrap();
    // c = 1: (1/2)² (1 + 1/2)²
    assert_relative_eq!(bias_sq(&one, 1.0, 1.0), 9.0 / 16.0, epsilon = 1e-15);
    // (γ²/λ)·c/(1+c)² at c = 1
    assert_relative_eq!(variance(&one, NoiseSpec::new(1.0).unwrap(), 1.0, 0.0), 0.25, epsilon = 1e-15);
    // ξ = (1+c)/c zeroes the variance factor
    let c: f64 = 0.3;
    assert!(variance(&one, NoiseSpec::new(2.0).unwrap(), c, (1.0 + c) / c).abs() < 1e-15);
    let empty = SpectralDesign::new(vec![1.0, 0.5], vec![0.0, 0.0], 0.0, 2).unwrap();
    assert_eq!(expected_error(&empty, NoiseSpec::new(0.0).unwrap(), 0.7, 1.3), 0.0);
    assert_eq!(variance(&one, NoiseSpec::new(0.0).unwrap(), 0.7, 0.2), 0.0);
}

#[test]
fn monte_carlo_matches_teacher_error() {
    let mut r = rng(5);
    let x = normal_matrix(&mut r, 3, 10);
    let prob = DenseRidgeProblem::new(x, normal_vector(&mut r, 3), 0.5, 0.8, 9).unwrap();
    let design = prob.spectral_basis().unwrap().design;
    let analytic = expected_error(&design, prob.noise(), prob.lambda, 0.0);
    let (mean, se) = prob.mc_expected_error(0.0, 20_000).unwrap();
    assert!((mean - analytic).abs() <= 3.0 * se, "{mean} ± {se} vs {analytic}");
    assert_eq!(prob.mc_expected_error(0.0, 500).unwrap(), prob.mc_expected_error(0.0, 500).unwrap());
}

#[test]
fn monte_carlo_without_noise_is_deterministic_error() {
    let prob = DenseRidgeProblem { gamma: 0.0, ..random_problem(11) };
    let y = prob.clean_labels();
    let t = prob.teacher_fit(&y).unwrap();
    let s = prob.student_fit(&y, &t, 0.6).unwrap();
    let (mean, se) = prob.mc_expected_error(0.6, 100).unwrap();
    assert_eq!(se, 0.0);
    assert_relative_eq!(mean, (s - &prob.theta_star).norm_squared(), max_relative = 1e-12);
}

#[test]
fn rank_deficient_design_folds_into_null_mass() {
    // Four samples in five dimensions: at least one direction is unseen.
    let mut r = rng(21);
    let prob = DenseRidgeProblem::new(normal_matrix(&mut r, 5, 4), normal_vector(&mut r, 5), 0.3, 0.5, 0).unwrap();
    let design = prob.spectral_basis().unwrap().design;
    assert_eq!(design.rank(), 4);
    assert!(design.null_mass() > 0.0);
    assert_relative_eq!(design.norm_sq(), prob.theta_star.norm_squared(), max_relative = 1e-12);
    assert!(expected_error(&design, prob.noise(), prob.lambda, 0.5) >= design.null_mass());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_student_agrees_with_dense(seed in 0u64..10_000) {
        let prob = random_problem(seed);
        let basis = prob.spectral_basis().unwrap();
        let eta = normal_vector(&mut rng(seed ^ 0xabc), prob.n()) * prob.gamma;
        let y = prob.clean_labels() + &eta;
        let t = prob.teacher_fit(&y).unwrap();
        for xi in [0.0, 0.5, 1.0, 1.5] {
            let dense = prob.student_fit(&y, &t, xi).unwrap();
            let spectral = prob.student_spectral(&basis, &eta, xi);
            prop_assert!((dense - spectral).norm() <= 1e-8);
        }
    }

    #[test]
    fn bias_rises_and_variance_falls_on_unit_interval(seed in 0u64..10_000, lambda in 0.01f64..5.0, g2 in 0.0f64..2.0) {
        let design = random_design(seed);
        let noise = NoiseSpec::new(g2).unwrap();
        let xis: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        for w in xis.windows(2) {
            prop_assert!(bias_sq(&design, lambda, w[1]) >= bias_sq(&design, lambda, w[0]) * (1.0 - 1e-14));
            prop_assert!(variance(&design, noise, lambda, w[1]) <= variance(&design, noise, lambda, w[0]) * (1.0 + 1e-14) + 1e-300);
        }
    }

    #[test]
    fn error_is_quadratic_in_xi(seed in 0u64..10_000, lambda in 0.01f64..5.0, g2 in 0.0f64..2.0) {
        let design = random_design(seed);
        let noise = NoiseSpec::new(g2).unwrap();
        let e = |xi: f64| expected_error(&design, noise, lambda, xi);
        // Lagrange extrapolation from ξ ∈ {0, 1, 2} to ξ = 3.
        let predicted = e(0.0) - 3.0 * e(1.0) + 3.0 * e(2.0);
        prop_assert!(rel_gap(predicted, e(3.0)) <= 1e-10);
    }

    #[test]
    fn error_never_below_null_mass(seed in 0u64..10_000, lambda in 1e-3f64..10.0, xi in -3.0f64..3.0) {
        let design = random_design(seed);
        let e = expected_error(&design, NoiseSpec::new(0.5).unwrap(), lambda, xi);
        prop_assert!(e >= design.null_mass());
    }
}
