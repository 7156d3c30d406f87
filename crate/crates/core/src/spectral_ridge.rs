//! Ridge teacher and self-distilled student, dense and spectral.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Relative cutoff below which singular values are folded into the null space.
pub const RANK_TOL: f64 = 1e-12;

/// Spectrum of the design and the projections of the true parameter onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDesign {
    sigma: Vec<f64>,
    s: Vec<f64>,
    null_mass: f64,
    d: usize,
}

impl SpectralDesign {
    pub fn new(sigma: Vec<f64>, s: Vec<f64>, null_mass: f64, d: usize) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::invalid("design needs at least one singular value"));
        }
        if sigma.len() != s.len() {
            return Err(Error::invalid(format!(
                "sigma has {} entries but s has {}",
                sigma.len(),
                s.len()
            )));
        }
        if sigma.len() > d {
            return Err(Error::invalid("rank exceeds ambient dimension"));
        }
        if sigma.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("singular values must be positive and finite"));
        }
        if sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("singular values must be sorted non-increasing"));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal projections must be finite"));
        }
        if !(null_mass >= 0.0 && null_mass.is_finite()) {
            return Err(Error::invalid("null mass must be non-negative"));
        }
        Ok(Self {
            sigma,
            s,
            null_mass,
            d,
        })
    }

    /// Build a design from singular values and per-direction energies θ*_j = s_j².
    pub fn from_energies(sigma: Vec<f64>, theta: &[f64], null_mass: f64, d: usize) -> Result<Self> {
        if theta.iter().any(|&t| t < 0.0) {
            return Err(Error::invalid("energies must be non-negative"));
        }
        let s = theta.iter().map(|t| t.sqrt()).collect();
        Self::new(sigma, s, null_mass, d)
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn null_mass(&self) -> f64 {
        self.null_mass
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// θ*_j = s_j².
    pub fn theta(&self) -> Vec<f64> {
        self.s.iter().map(|v| v * v).collect()
    }

    /// ‖θ*‖².
    pub fn norm_sq(&self) -> f64 {
        self.s.iter().map(|v| v * v).sum::<f64>() + self.null_mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub gamma_sq: f64,
}

impl NoiseSpec {
    pub fn new(gamma_sq: f64) -> Result<Self> {
        if !(gamma_sq >= 0.0 && gamma_sq.is_finite()) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        Ok(Self { gamma_sq })
    }

    pub fn from_gamma(gamma: f64) -> Result<Self> {
        Self::new(gamma * gamma)
    }
}

/// An explicit ridge instance: design X (d×n, columns are samples), θ*, noise level.
#[derive(Debug, Clone)]
pub struct DenseRidgeProblem {
    pub x: DMatrix<f64>,
    pub theta_star: DVector<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
}

/// Thin SVD pieces of a dense problem, sorted by decreasing singular value.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub design: SpectralDesign,
    /// Left singular vectors kept in the design (d×r).
    pub u: DMatrix<f64>,
    /// Right singular vectors kept in the design (n×r).
    pub v: DMatrix<f64>,
}

impl DenseRidgeProblem {
    pub fn new(x: DMatrix<f64>, theta_star: DVector<f64>, gamma: f64, lambda: f64, seed: u64) -> Result<Self> {
        if x.nrows() != theta_star.len() {
            return Err(Error::invalid(format!(
                "X has {} rows but theta* has {} entries",
                x.nrows(),
                theta_star.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("empty design"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma must be non-negative"));
        }
        Ok(Self {
            x,
            theta_star,
            gamma,
            lambda,
            seed,
        })
    }

    pub fn d(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            gamma_sq: self.gamma * self.gamma,
        }
    }

    /// Noise-free labels Xᵀθ*.
    pub fn clean_labels(&self) -> DVector<f64> {
        self.x.tr_mul(&self.theta_star)
    }

    fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        let mut a = &self.x * self.x.transpose();
        for i in 0..a.nrows() {
            a[(i, i)] += self.lambda;
        }
        Cholesky::new(a).ok_or_else(|| Error::DegenerateDesign("XXᵀ + λI is not positive definite".into()))
    }

    fn check_labels(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n() {
            return Err(Error::invalid(format!("expected {} labels, got {}", self.n(), y.len())));
        }
        Ok(())
    }

    /// (XXᵀ + λI)⁻¹ X Y.
    pub fn teacher_fit(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_labels(y)?;
        let chol = self.factor()?;
        Ok(chol.solve(&(&self.x * y)))
    }

    /// ξ (XXᵀ+λI)⁻¹ XXᵀ θ_T + (1−ξ) θ_T.
    pub fn student_fit(&self, y: &DVector<f64>, teacher: &DVector<f64>, xi: f64) -> Result<DVector<f64>> {
        self.check_labels(y)?;
        if teacher.len() != self.d() {
            return Err(Error::invalid("teacher has the wrong dimension"));
        }
        let chol = self.factor()?;
        Ok(student_from(&chol, &self.x, teacher, xi))
    }

    /// SVD of X with singular values below `RANK_TOL·σ₁` moved into the null mass.
    pub fn spectral_basis(&self) -> Result<SpectralBasis> {
        let svd = self.x.clone().svd(true, true);
        let u_all = svd.u.expect("requested U");
        let vt_all = svd.v_t.expect("requested Vᵀ");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let top = svd.singular_values[order[0]];
        if !(top > 0.0) {
            return Err(Error::DegenerateDesign("design matrix is zero".into()));
        }
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| svd.singular_values[i] >= RANK_TOL * top)
            .collect();
        let d = self.d();
        let n = self.n();
        let mut u = DMatrix::zeros(d, keep.len());
        let mut v = DMatrix::zeros(n, keep.len());
        let mut sigma = Vec::with_capacity(keep.len());
        let mut s = Vec::with_capacity(keep.len());
        for (col, &i) in keep.iter().enumerate() {
            u.set_column(col, &u_all.column(i));
            v.set_column(col, &vt_all.row(i).transpose());
            sigma.push(svd.singular_values[i]);
            s.push(u_all.column(i).dot(&self.theta_star));
        }
        let captured: f64 = s.iter().map(|v| v * v).sum();
        let null_mass = (self.theta_star.norm_squared() - captured).max(0.0);
        Ok(SpectralBasis {
            design: SpectralDesign::new(sigma, s, null_mass, d)?,
            u,
            v,
        })
    }

    /// Student estimate rebuilt from the SVD: Σ_j [s_j + ⟨η,v_j⟩/σ_j]/(1+c_j)·(1 − ξc_j/(1+c_j)) u_j.
    pub fn student_spectral(&self, basis: &SpectralBasis, eta: &DVector<f64>, xi: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.d());
        let design = &basis.design;
        for j in 0..design.rank() {
            let sig = design.sigma[j];
            let c = self.lambda / (sig * sig);
            let proj = basis.v.column(j).dot(eta);
            let coef = (design.s[j] + proj / sig) / (1.0 + c) * (1.0 - xi * c / (1.0 + c));
            out.axpy(coef, &basis.u.column(j), 1.0);
        }
        out
    }

    /// Monte-Carlo estimate of E‖θ_S(ξ) − θ*‖² with Gaussian label noise.
    ///
    /// Returns (mean, standard error). Deterministic for a given seed.
    pub fn mc_expected_error(&self, xi: f64, draws: usize) -> Result<(f64, f64)> {
        if draws < 100 {
            return Err(Error::invalid("at least 100 draws are required"));
        }
        let chol = self.factor()?;
        let clean = self.clean_labels();
        let mut rng = stream_rng(self.seed, stream::RIDGE_NOISE);
        let mut y = clean.clone();
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for k in 0..draws {
            for i in 0..y.len() {
                let z: f64 = rng.sample(StandardNormal);
                y[i] = clean[i] + self.gamma * z;
            }
            let teacher = chol.solve(&(&self.x * &y));
            let student = student_from(&chol, &self.x, &teacher, xi);
            let err = (student - &self.theta_star).norm_squared();
            let delta = err - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (err - mean);
        }
        let var = m2 / (draws - 1) as f64;
        Ok((mean, (var / draws as f64).sqrt()))
    }
}

fn student_from(chol: &Cholesky<f64, Dyn>, x: &DMatrix<f64>, teacher: &DVector<f64>, xi: f64) -> DVector<f64> {
    let fitted = x * x.tr_mul(teacher);
    let smoothed = chol.solve(&fitted);
    smoothed * xi + teacher * (1.0 - xi)
}

fn check_lambda(lambda: f64) {
    debug_assert!(lambda > 0.0, "lambda must be positive");
}

/// Squared bias of the student at (λ, ξ).
pub fn bias_sq(design: &SpectralDesign, lambda: f64, xi: f64) -> f64 {
    check_lambda(lambda);
    let mut total = design.null_mass;
    for (&sig, &s) in design.sigma.iter().zip(&design.s) {
        let c = lambda / (sig * sig);
        let shrink = c / (1.0 + c);
        let boost = 1.0 + xi / (1.0 + c);
        total += s * s * shrink * shrink * boost * boost;
    }
    total
}

/// Variance of the student at (λ, ξ).
pub fn variance(design: &SpectralDesign, noise: NoiseSpec, lambda: f64, xi: f64) -> f64 {
    check_lambda(lambda);
    if noise.gamma_sq == 0.0 {
        return 0.0;
    }
    let sum: f64 = design
        .sigma
        .iter()
        .map(|&sig| {
            let c = lambda / (sig * sig);
            let f = 1.0 - xi * c / (1.0 + c);
            c / ((1.0 + c) * (1.0 + c)) * f * f
        })
        .sum();
    noise.gamma_sq / lambda * sum
}

pub fn expected_error(design: &SpectralDesign, noise: NoiseSpec, lambda: f64, xi: f64) -> f64 {
    bias_sq(design, lambda, xi) + variance(design, noise, lambda, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_dim() -> SpectralDesign {
        SpectralDesign::new(vec![1.0], vec![1.0], 0.0, 1).unwrap()
    }

    #[test]
    fn rejects_unsorted_sigma() {
        assert!(SpectralDesign::new(vec![0.5, 1.0], vec![0.0, 0.0], 0.0, 2).is_err());
        assert!(SpectralDesign::new(vec![1.0], vec![0.0], -1.0, 1).is_err());
        assert!(SpectralDesign::new(vec![1.0, 0.5], vec![0.0, 0.0], 0.0, 1).is_err());
    }

    #[test]
    fn identity_teacher_halves_labels() {
        let y = DVector::from_vec(vec![1.0, -2.0, 4.0]);
        let p = DenseRidgeProblem::new(DMatrix::identity(3, 3), DVector::zeros(3), 0.0, 1.0, 0).unwrap();
        let t = p.teacher_fit(&y).unwrap();
        assert_relative_eq!(t, &y / 2.0, epsilon = 1e-14);
        let s = p.student_fit(&y, &t, 1.0).unwrap();
        assert_relative_eq!(s, &t / 2.0, epsilon = 1e-14);
        assert_eq!(p.student_fit(&y, &t, 0.0).unwrap(), t);
    }

    #[test]
    fn heavy_shrinkage() {
        let x = DMatrix::from_fn(3, 5, |i, j| (i + 2 * j) as f64 * 0.1);
        let y = DVector::from_fn(5, |i, _| i as f64);
        let p = DenseRidgeProblem::new(x.clone(), DVector::zeros(3), 0.0, 1e12, 0).unwrap();
        let t = p.teacher_fit(&y).unwrap();
        assert!(t.norm() <= (&x * &y).norm() / 1e12 * (1.0 + 1e-9));
    }

    #[test]
    fn dimension_mismatch_is_invalid() {
        let p = DenseRidgeProblem::new(DMatrix::identity(2, 3), DVector::zeros(2), 0.0, 1.0, 0).unwrap();
        assert!(matches!(p.teacher_fit(&DVector::zeros(2)), Err(Error::InvalidInput(_))));
        assert!(DenseRidgeProblem::new(DMatrix::identity(2, 3), DVector::zeros(3), 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn hand_values() {
        assert_relative_eq!(bias_sq(&one_dim(), 1.0, 1.0), 9.0 / 16.0, epsilon = 1e-15);
        let noise = NoiseSpec::new(1.0).unwrap();
        assert_relative_eq!(variance(&one_dim(), noise, 1.0, 0.0), 0.25, epsilon = 1e-15);
        // c = 1 so ξ = (1+c)/c = 2 zeroes the variance.
        assert_eq!(variance(&one_dim(), noise, 1.0, 2.0), 0.0);
    }

    #[test]
    fn limits() {
        let d = SpectralDesign::new(vec![2.0, 1.0], vec![0.3, -0.4], 0.1, 3).unwrap();
        assert_relative_eq!(bias_sq(&d, 1e12, 0.7), d.norm_sq(), max_relative = 1e-9);
        let zero = SpectralDesign::new(vec![2.0, 1.0], vec![0.0, 0.0], 0.0, 2).unwrap();
        assert_eq!(bias_sq(&zero, 0.3, 5.0), 0.0);
        assert_eq!(expected_error(&zero, NoiseSpec::new(0.0).unwrap(), 0.3, 5.0), 0.0);
    }

    #[test]
    fn mc_needs_draws() {
        let p = DenseRidgeProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0, 1.0, 0).unwrap();
        assert!(p.mc_expected_error(0.0, 99).is_err());
    }

    #[test]
    fn mc_without_noise_is_exact() {
        let x = DMatrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let theta = DVector::from_vec(vec![0.5, -1.0, 0.25]);
        let p = DenseRidgeProblem::new(x, theta.clone(), 0.0, 0.7, 3).unwrap();
        let (mean, se) = p.mc_expected_error(0.4, 100).unwrap();
        assert_eq!(se, 0.0);
        let y = p.clean_labels();
        let t = p.teacher_fit(&y).unwrap();
        let s = p.student_fit(&y, &t, 0.4).unwrap();
        assert_relative_eq!(mean, (s - theta).norm_squared(), max_relative = 1e-12);
    }
}
