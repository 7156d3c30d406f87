//! Choosing the imitation parameter ξ and the ridge penalty λ.
//!
//! Everything here works on a [`SpectralDesign`]; with s_j = σ_j² and
//! θ_j = ⟨θ*, u_j⟩² the plain-ridge error is
//! e_reg(λ) = Σ λ²θ_j/(λ+s_j)² + null + Σ γ²s_j/(λ+s_j)²
//! and the error with the best ξ at each λ is e_sd(λ) = e_reg − e_reg'²/h.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_ridge::{NoiseSpec, SpectralDesign};

/// Gradient-scan sizes for the two minimizers.
pub const REG_GRID: usize = 64;
pub const SD_GRID: usize = 256;
const MAX_ITER: usize = 200;

/// One row of an error-curve sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub lambda: f64,
    pub e_reg: f64,
    pub e_sd: f64,
    pub xi_star: f64,
    pub e_sd_prime: f64,
}

/// A positive search interval for λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Bracketing(format!("invalid bracket [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// [1e-6·σ_r², 1e3·σ₁²].
    pub fn default_for(design: &SpectralDesign) -> Self {
        let sig = design.sigma();
        let small = sig[sig.len() - 1];
        Self {
            lo: 1e-6 * small * small,
            hi: 1e3 * sig[0] * sig[0],
        }
    }

    pub fn log_grid(&self, points: usize) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let last = (points - 1) as f64;
        (0..points)
            .map(|i| match i {
                0 => self.lo,
                _ if i == points - 1 => self.hi,
                _ => (a + (b - a) * i as f64 / last).exp(),
            })
            .collect()
    }
}

/// Result of a one-dimensional minimization over λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMin {
    pub lambda: f64,
    pub value: f64,
    /// The minimum sits on the bracket edge; the error keeps falling past it.
    pub at_boundary: bool,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// Iterate (s_j, θ_j) with s_j = σ_j².
fn terms(design: &SpectralDesign) -> impl Iterator<Item = (f64, f64)> + '_ {
    design.sigma().iter().zip(design.s()).map(|(&sig, &s)| (sig * sig, s * s))
}

/// Optimal imitation parameter at a fixed λ.
pub fn xi_star(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let g2 = noise.gamma_sq;
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, theta) in terms(design) {
        let c = lambda / s;
        let q = 1.0 + c;
        num += (g2 / lambda - theta) * c * c / (q * q * q);
        den += (g2 * c / lambda + theta) * c * c / (q * q * q * q);
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateDesign("zero signal and zero noise: ξ* undefined".into()));
    }
    Ok(num / den)
}

/// lim_{γ→∞} ξ*(λ).
pub fn xi_star_gamma_limit(design: &SpectralDesign, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, _) in terms(design) {
        let c = lambda / s;
        let q = 1.0 + c;
        num += c * c / (q * q * q);
        den += c * c * c / (q * q * q * q);
    }
    Ok(num / den)
}

pub fn e_reg(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let g2 = noise.gamma_sq;
    let sum: f64 = terms(design)
        .map(|(s, theta)| {
            let q = lambda + s;
            (lambda * lambda * theta + g2 * s) / (q * q)
        })
        .sum();
    Ok(sum + design.null_mass())
}

pub fn e_reg_prime(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    Ok(2.0 * g(design, noise, lambda)?)
}

/// g(λ) = Σ (λθ_j − γ²) s_j/(λ+s_j)³.
pub fn g(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let g2 = noise.gamma_sq;
    Ok(terms(design)
        .map(|(s, theta)| {
            let q = lambda + s;
            (lambda * theta - g2) * s / (q * q * q)
        })
        .sum())
}

pub fn e_reg_second(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let g2 = noise.gamma_sq;
    let sum: f64 = terms(design)
        .map(|(s, theta)| {
            let q = (lambda + s).powi(4);
            s * (theta * s - 2.0 * lambda * theta + 3.0 * g2) / q
        })
        .sum();
    Ok(2.0 * sum)
}

/// h(λ) = 4 Σ (γ² s_j + θ_j s_j²)/(λ+s_j)⁴.
pub fn h(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let g2 = noise.gamma_sq;
    Ok(4.0
        * terms(design)
            .map(|(s, theta)| (g2 * s + theta * s * s) / (lambda + s).powi(4))
            .sum::<f64>())
}

fn h_prime(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> f64 {
    let g2 = noise.gamma_sq;
    -16.0
        * terms(design)
            .map(|(s, theta)| (g2 * s + theta * s * s) / (lambda + s).powi(5))
            .sum::<f64>()
}

fn nonzero_h(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    let hv = h(design, noise, lambda)?;
    if hv > 0.0 {
        Ok(hv)
    } else {
        Err(Error::DegenerateDesign("zero signal and zero noise: e_sd undefined".into()))
    }
}

pub fn e_sd(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    let hv = nonzero_h(design, noise, lambda)?;
    let d1 = e_reg_prime(design, noise, lambda)?;
    Ok(e_reg(design, noise, lambda)? - d1 * d1 / hv)
}

pub fn e_sd_prime(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<f64> {
    let hv = nonzero_h(design, noise, lambda)?;
    let d1 = e_reg_prime(design, noise, lambda)?;
    let d2 = e_reg_second(design, noise, lambda)?;
    let hp = h_prime(design, noise, lambda);
    Ok(d1 * (1.0 - 2.0 * d2 / hv + d1 * hp / (hv * hv)))
}

pub fn curve_record(design: &SpectralDesign, noise: NoiseSpec, lambda: f64) -> Result<CurveRecord> {
    Ok(CurveRecord {
        lambda,
        e_reg: e_reg(design, noise, lambda)?,
        e_sd: e_sd(design, noise, lambda)?,
        xi_star: xi_star(design, noise, lambda)?,
        e_sd_prime: e_sd_prime(design, noise, lambda)?,
    })
}

/// The curvature sum whose negativity makes λ* a local maximum of e_sd.
///
/// Returns (t3, t3 < 0).
pub fn local_max_condition(design: &SpectralDesign, lambda_star: f64) -> Result<(f64, bool)> {
    check_lambda(lambda_star)?;
    let st: Vec<(f64, f64)> = terms(design).collect();
    let mut t3 = 0.0;
    for k in 0..st.len() {
        let (sk, tk) = st[k];
        let dk = (lambda_star + sk).powi(4);
        for &(sj, tj) in &st[..k] {
            let dj = (lambda_star + sj).powi(4);
            t3 += sj * sk * (sj - sk) * (tk - tj) / (dj * dk);
        }
    }
    Ok((t3, t3 < 0.0))
}

/// Sufficient condition for λ*_reg to be a local maximum of e_sd.
///
/// The design must be normalized (‖θ*‖ = 1, σ₁ = 1). The leading `q`
/// directions carry the signal; the remaining ones must have singular
/// values at most δ. The minimum in the δ bound runs over k = 2..q because
/// the k = 1 term vanishes identically.
pub fn theorem8_check(design: &SpectralDesign, noise: NoiseSpec, q: usize, nu: f64) -> Result<bool> {
    let r = design.rank();
    if (design.norm_sq() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("theta* must have unit norm"));
    }
    if (design.sigma()[0] - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("sigma_1 must equal 1"));
    }
    if q < 2 || q > r {
        return Err(Error::invalid(format!("q must lie in 2..={r}")));
    }
    if !(nu > 1.0) {
        return Err(Error::invalid("nu must exceed 1"));
    }
    let sigma = design.sigma();
    let theta = design.theta();
    if theta[..q].windows(2).any(|w| w[1] >= w[0]) {
        return Ok(false);
    }
    let delta = sigma[q..].iter().copied().fold(0.0, f64::max);
    let min_gap = (1..q)
        .map(|k| {
            let s = sigma[k] * sigma[k];
            s * (1.0 - s) * (theta[0] - theta[k])
        })
        .fold(f64::INFINITY, f64::min);
    if !(min_gap > 0.0) {
        return Ok(false);
    }
    let bound = (min_gap / (2.0 * nu * r as f64)).sqrt();
    let theta_max = theta.iter().copied().fold(0.0, f64::max);
    Ok(delta <= bound && noise.gamma_sq >= theta_max / (nu - 1.0))
}

fn argmin_smallest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn eval_grid(grid: &[f64], f: &dyn Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&l| {
            let v = f(l)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Bracketing(format!("non-finite objective at lambda = {l}")))
            }
        })
        .collect()
}

/// Root of `df` on [a, b] given a sign change, by safeguarded Newton when a
/// second derivative is available and bisection otherwise.
fn refine_root(
    mut a: f64,
    mut b: f64,
    df: &dyn Fn(f64) -> Result<f64>,
    d2f: Option<&dyn Fn(f64) -> Result<f64>>,
    tol: &dyn Fn(f64, f64) -> bool,
) -> Result<f64> {
    let fa = df(a)?;
    let neg_at_a = fa < 0.0;
    if fa == 0.0 {
        return Ok(a);
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..MAX_ITER {
        let fx = df(x)?;
        if fx == 0.0 || tol(x, fx) {
            return Ok(x);
        }
        if (fx < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        if (b - a) <= 4.0 * f64::EPSILON * b {
            return Ok(x);
        }
        let mut next = 0.5 * (a + b);
        if let Some(d2) = d2f {
            let slope = d2(x)?;
            if slope != 0.0 {
                let newton = x - fx / slope;
                if newton > a && newton < b {
                    next = newton;
                }
            }
        }
        x = next;
    }
    Ok(x)
}

/// Minimizer of e_reg over the bracket: 64-point log scan, then Newton on
/// e_reg' with bisection fallback.
pub fn minimize_e_reg(design: &SpectralDesign, noise: NoiseSpec, bracket: Bracket) -> Result<LambdaMin> {
    let grid = bracket.log_grid(REG_GRID);
    let f = |l: f64| e_reg(design, noise, l);
    let vals = eval_grid(&grid, &f)?;
    let i = argmin_smallest(&vals);
    let df = |l: f64| e_reg_prime(design, noise, l);
    let d2 = |l: f64| e_reg_second(design, noise, l);
    let (a, b) = interior_bracket(&grid, i);
    let (da, db) = (df(a)?, df(b)?);
    if !(da < 0.0 && db > 0.0) {
        let (lambda, edge) = if df(bracket.lo)? >= 0.0 {
            (bracket.lo, true)
        } else if df(bracket.hi)? <= 0.0 {
            (bracket.hi, true)
        } else {
            return Err(Error::Bracketing("e_reg' has no sign change near the grid minimum".into()));
        };
        return Ok(LambdaMin {
            lambda,
            value: f(lambda)?,
            at_boundary: edge,
        });
    }
    let tol = |x: f64, fx: f64| fx.abs() <= 1e-14 * (1.0 + f(x).unwrap_or(f64::INFINITY).abs());
    let lambda = refine_root(a, b, &df, Some(&d2), &tol)?;
    Ok(LambdaMin {
        lambda,
        value: f(lambda)?,
        at_boundary: false,
    })
}

fn interior_bracket(grid: &[f64], i: usize) -> (f64, f64) {
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    (lo, hi)
}

/// Golden-section search for a minimum of `f` on [a, b].
fn golden(mut a: f64, mut b: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..MAX_ITER {
        if (b - a) <= 4.0 * f64::EPSILON * b {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { c } else { d })
}

/// Global minimizer of e_sd over the bracket.
///
/// e_sd can have several local minima (λ*_reg may be a local maximum), so a
/// 256-point log scan picks the basin first; ties go to the smallest λ. Inside
/// the basin the minimizer is refined by bisection on the sign of e_sd'. When
/// e_reg' also changes sign there, its root is a root of e_sd' too and is
/// used if it is at least as good, since e_sd' can be very flat.
pub fn minimize_e_sd(design: &SpectralDesign, noise: NoiseSpec, bracket: Bracket) -> Result<LambdaMin> {
    let grid = bracket.log_grid(SD_GRID);
    let f = |l: f64| e_sd(design, noise, l);
    let vals = eval_grid(&grid, &f)?;
    let i = argmin_smallest(&vals);
    if i == 0 || i == grid.len() - 1 {
        return Ok(LambdaMin {
            lambda: grid[i],
            value: vals[i],
            at_boundary: true,
        });
    }
    let (a, b) = interior_bracket(&grid, i);
    let df = |l: f64| e_sd_prime(design, noise, l);
    let (da, db) = (df(a)?, df(b)?);
    let mut best = if da < 0.0 && db > 0.0 {
        let tol = |_: f64, _: f64| false;
        refine_root(a, b, &df, None, &tol)?
    } else {
        golden(a, b, &f)?
    };
    let mut best_val = f(best)?;
    let dr = |l: f64| e_reg_prime(design, noise, l);
    if dr(a)? < 0.0 && dr(b)? > 0.0 {
        let d2 = |l: f64| e_reg_second(design, noise, l);
        let tol = |_: f64, _: f64| false;
        let root = refine_root(a, b, &dr, Some(&d2), &tol)?;
        let v = f(root)?;
        if v <= best_val + 1e-14 * best_val.abs() {
            best = root;
            best_val = v;
        }
    }
    if vals[i] < best_val {
        best = grid[i];
        best_val = vals[i];
    }
    Ok(LambdaMin {
        lambda: best,
        value: best_val,
        at_boundary: false,
    })
}

/// σ = (1, ½), θ* = (½, ½): here λ*_reg = λ*_sd = 2γ².
pub fn equal_optimum_design() -> SpectralDesign {
    SpectralDesign::from_energies(vec![1.0, 0.5], &[0.5, 0.5], 0.0, 2).expect("static design")
}

/// d = r = 100, σ_j = 1/j, θ* = (u₁ + u₂)/√2.
pub fn harmonic_design() -> SpectralDesign {
    let sigma: Vec<f64> = (1..=100).map(|j| 1.0 / j as f64).collect();
    let mut s = vec![0.0; 100];
    s[0] = std::f64::consts::FRAC_1_SQRT_2;
    s[1] = std::f64::consts::FRAC_1_SQRT_2;
    SpectralDesign::new(sigma, s, 0.0, 100).expect("static design")
}

/// λ_i = 2^{i−3} γ² for i = 1..10.
pub fn sweep_lambdas(gamma: f64) -> Vec<f64> {
    (1..=10).map(|i| 2f64.powi(i - 3) * gamma * gamma).collect()
}

pub fn figure0_sweep(gamma: f64) -> Result<Vec<CurveRecord>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma must be positive"));
    }
    let design = harmonic_design();
    let noise = NoiseSpec::from_gamma(gamma)?;
    sweep_lambdas(gamma)
        .into_iter()
        .map(|l| curve_record(&design, noise, l))
        .collect()
}
