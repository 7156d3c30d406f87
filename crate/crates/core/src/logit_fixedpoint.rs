//! Teacher and student dual fixed points for binary kernel logistic
//! regression with flipped labels.
//!
//! Within a class every pair of features has inner product c and every
//! feature has unit norm. With n samples per class, a fraction p of them
//! flipped, and λ̂ = 2nλ, the teacher's duals (α for clean points, α̂ for
//! flipped ones) solve
//!
//! ```text
//! σ(cn(1−p)α − (cnp + 1 − c)α̂) = λ̂α̂
//! σ(cn(1−p)α − cnpα̂ + (1 − c)α) = 1 − λ̂α
//! ```
//!
//! and the student, trained on the teacher's soft labels, solves the same
//! system with right-hand sides shifted by λ̂α̂ and λ̂α.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual bound required of every returned solution.
pub const RESIDUAL_TOL: f64 = 1e-12;
const NEWTON_ITERS: usize = 200;
const MAX_HALVINGS: usize = 60;
const BISECT_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSetting {
    pub n: f64,
    pub p: f64,
    pub c: f64,
    pub lambda_hat: f64,
}

impl CorruptionSetting {
    pub fn new(n: f64, p: f64, c: f64, lambda_hat: f64) -> Result<Self> {
        if !(n >= 1.0 && n.is_finite()) {
            return Err(Error::invalid("n must be at least 1"));
        }
        if !(0.0..0.5).contains(&p) {
            return Err(Error::invalid(format!("p must lie in [0, 0.5), got {p}")));
        }
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::invalid(format!("c must lie in (0, 1), got {c}")));
        }
        if !(lambda_hat > 0.0 && lambda_hat.is_finite()) {
            return Err(Error::invalid("lambda_hat must be positive"));
        }
        Ok(Self { n, p, c, lambda_hat })
    }

    /// Setting with λ̂ chosen so that (1−c)/(4λ̂) = r.
    pub fn from_r(n: f64, p: f64, c: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::invalid("r must be positive"));
        }
        Self::new(n, p, c, (1.0 - c) / (4.0 * r))
    }

    pub fn r(&self) -> f64 {
        (1.0 - self.c) / (4.0 * self.lambda_hat)
    }

    fn cn(&self) -> f64 {
        self.c * self.n
    }

    /// Sigmoid arguments for (flipped, clean) points given duals (x, x̂).
    fn args(&self, x: f64, xh: f64) -> (f64, f64) {
        let m = self.cn() * ((1.0 - self.p) * x - self.p * xh);
        (m - (1.0 - self.c) * xh, m + (1.0 - self.c) * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherDual {
    pub alpha: f64,
    pub alpha_hat: f64,
    pub residual: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentDual {
    pub beta: f64,
    pub beta_hat: f64,
    pub residual: (f64, f64),
}

/// Predicted P(y = 1) for the four point groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionProfile {
    /// True class 1, observed label flipped.
    pub bad1: f64,
    /// True class 1, observed label intact.
    pub good1: f64,
    pub bad0: f64,
    pub good0: f64,
}

impl PredictionProfile {
    fn from_class1(bad1: f64, good1: f64) -> Result<Self> {
        for v in [bad1, good1] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InconsistentSolution(format!(
                    "prediction {v} lies outside (0, 1)"
                )));
            }
        }
        Ok(Self {
            bad1,
            good1,
            bad0: 1.0 - bad1,
            good0: 1.0 - good1,
        })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Right-hand-side offsets: zero for the teacher, (λ̂α̂, λ̂α) for the student.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    flipped: f64,
    clean: f64,
}

fn residual(set: &CorruptionSetting, off: Offsets, x: f64, xh: f64) -> (f64, f64) {
    let (z1, z2) = set.args(x, xh);
    let lh = set.lambda_hat;
    (
        sigmoid(z1) - lh * xh - off.flipped,
        sigmoid(z2) - 1.0 + lh * x + off.clean,
    )
}

fn max_abs(r: (f64, f64)) -> f64 {
    r.0.abs().max(r.1.abs())
}

/// Damped Newton with up to 60 step halvings per iteration.
fn newton(set: &CorruptionSetting, off: Offsets, x0: f64, xh0: f64) -> Option<(f64, f64)> {
    let (cn, p, c, lh) = (set.cn(), set.p, set.c, set.lambda_hat);
    let (mut x, mut xh) = (x0, xh0);
    let mut f = residual(set, off, x, xh);
    let mut merit = max_abs(f);
    for _ in 0..NEWTON_ITERS {
        if merit <= RESIDUAL_TOL {
            return Some((x, xh));
        }
        let (z1, z2) = set.args(x, xh);
        let (s1, s2) = (sigmoid(z1), sigmoid(z2));
        let (d1, d2) = (s1 * (1.0 - s1), s2 * (1.0 - s2));
        let a11 = d1 * cn * (1.0 - p);
        let a12 = -d1 * (cn * p + 1.0 - c) - lh;
        let a21 = d2 * (cn * (1.0 - p) + 1.0 - c) + lh;
        let a22 = -d2 * cn * p;
        let det = a11 * a22 - a12 * a21;
        if !(det.abs() > 0.0) || !det.is_finite() {
            return None;
        }
        let dx = -(a22 * f.0 - a12 * f.1) / det;
        let dxh = -(-a21 * f.0 + a11 * f.1) / det;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let (nx, nxh) = (x + t * dx, xh + t * dxh);
            let nf = residual(set, off, nx, nxh);
            let nm = max_abs(nf);
            if nm.is_finite() && nm < merit {
                x = nx;
                xh = nxh;
                f = nf;
                merit = nm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return if merit <= RESIDUAL_TOL { Some((x, xh)) } else { None };
        }
    }
    (merit <= RESIDUAL_TOL).then_some((x, xh))
}

/// Root of an increasing function on [lo, hi] by bisection.
fn bisect_increasing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fallback: with m = cn((1−p)x − p·x̂) held fixed both equations are
/// monotone in a single unknown, and the consistency equation for m is
/// monotone in m. Three nested bisections, always convergent.
fn nested_bisection(set: &CorruptionSetting, off: Offsets) -> (f64, f64) {
    let (lh, c, p, cn) = (set.lambda_hat, set.c, set.p, set.cn());
    let xh_lo = -off.flipped / lh - 1.0;
    let xh_hi = (1.0 - off.flipped) / lh + 1.0;
    let x_lo = -off.clean / lh - 1.0;
    let x_hi = (1.0 - off.clean) / lh + 1.0;
    let xh_of = |m: f64| bisect_increasing(xh_lo, xh_hi, |xh| lh * xh + off.flipped - sigmoid(m - (1.0 - c) * xh));
    let x_of = |m: f64| bisect_increasing(x_lo, x_hi, |x| sigmoid(m + (1.0 - c) * x) - 1.0 + lh * x + off.clean);
    let m_lo = cn * ((1.0 - p) * x_lo - p * xh_hi);
    let m_hi = cn * ((1.0 - p) * x_hi - p * xh_lo);
    let m = bisect_increasing(m_lo, m_hi, |m| m - cn * ((1.0 - p) * x_of(m) - p * xh_of(m)));
    (x_of(m), xh_of(m))
}

fn solve(set: &CorruptionSetting, off: Offsets, x0: f64, xh0: f64) -> Result<(f64, f64, (f64, f64))> {
    if let Some((x, xh)) = newton(set, off, x0, xh0) {
        return Ok((x, xh, residual(set, off, x, xh)));
    }
    let (bx, bxh) = nested_bisection(set, off);
    let (x, xh) = newton(set, off, bx, bxh).unwrap_or((bx, bxh));
    let res = residual(set, off, x, xh);
    if max_abs(res) <= RESIDUAL_TOL {
        Ok((x, xh, res))
    } else {
        Err(Error::Solver {
            iterations: NEWTON_ITERS,
            residual: max_abs(res),
        })
    }
}

pub fn solve_teacher(set: &CorruptionSetting) -> Result<TeacherDual> {
    let scale = set.lambda_hat + (1.0 - set.c) / 4.0;
    let x0 = 1.02 * set.p / scale;
    let xh0 = 1.02 * (1.0 - set.p) / scale;
    let off = Offsets {
        flipped: 0.0,
        clean: 0.0,
    };
    let (alpha, alpha_hat, residual) = solve(set, off, x0, xh0)?;
    Ok(TeacherDual {
        alpha,
        alpha_hat,
        residual,
    })
}

pub fn solve_student(set: &CorruptionSetting, teacher: &TeacherDual) -> Result<StudentDual> {
    let lh = set.lambda_hat;
    let scale = lh + (1.0 - set.c) / 4.0;
    let k = (1.0 - lh * 1.02 / scale) / scale;
    let off = Offsets {
        flipped: lh * teacher.alpha_hat,
        clean: lh * teacher.alpha,
    };
    let (beta, beta_hat, residual) = solve(set, off, set.p * k, (1.0 - set.p) * k)?;
    Ok(StudentDual {
        beta,
        beta_hat,
        residual,
    })
}

/// (λ̂α̂, 1−λ̂α, 1−λ̂α̂, λ̂α).
pub fn teacher_predictions(dual: &TeacherDual, set: &CorruptionSetting) -> Result<PredictionProfile> {
    let lh = set.lambda_hat;
    PredictionProfile::from_class1(lh * dual.alpha_hat, 1.0 - lh * dual.alpha)
}

pub fn student_predictions(
    student: &StudentDual,
    teacher: &TeacherDual,
    set: &CorruptionSetting,
) -> Result<PredictionProfile> {
    let lh = set.lambda_hat;
    PredictionProfile::from_class1(
        lh * (teacher.alpha_hat + student.beta_hat),
        1.0 - lh * (teacher.alpha + student.beta),
    )
}

/// Accuracy against true labels; a point counts as predicted class 1 only
/// when P(y = 1) > ½.
pub fn group_accuracy(profile: &PredictionProfile, p: f64) -> f64 {
    let hit = |b: bool| if b { 1.0 } else { 0.0 };
    let class1 = p * hit(profile.bad1 > 0.5) + (1.0 - p) * hit(profile.good1 > 0.5);
    let class0 = p * hit(profile.bad0 <= 0.5) + (1.0 - p) * hit(profile.good0 <= 0.5);
    0.5 * (class1 + class0)
}

/// Range of p over which the student is provably perfect while the teacher
/// misclassifies every flipped point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PInterval {
    pub lo: f64,
    pub hi: f64,
    /// r lies in [0.10, 0.54], where the interval is known to be non-empty.
    pub guaranteed: bool,
}

impl PInterval {
    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn contains(&self, p: f64) -> bool {
        p > self.lo && p < self.hi
    }
}

pub fn thm1_p_interval(r: f64) -> PInterval {
    let lo = ((1.08 - r) / 2.08).max((1.0 + r) / 3.7);
    let hi = 1.0 - 0.51 * (1.0 + r) * (1.0 + r) / (1.0 + 2.0 * r);
    PInterval {
        lo,
        hi,
        guaranteed: (0.10..=0.54).contains(&r),
    }
}

/// Spread of predictions between clean and flipped points of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variability {
    pub delta_t: f64,
    pub delta_s: f64,
}

pub fn variability(teacher: &PredictionProfile, student: &PredictionProfile) -> Variability {
    Variability {
        delta_t: (teacher.good1 - teacher.bad1).abs(),
        delta_s: (student.good1 - student.bad1).abs(),
    }
}

/// The same spreads from the duals: 1 − λ̂(α+α̂) and 1 − λ̂(α+β+α̂+β̂).
pub fn variability_from_duals(teacher: &TeacherDual, student: &StudentDual, set: &CorruptionSetting) -> Variability {
    let lh = set.lambda_hat;
    let t = lh * (teacher.alpha + teacher.alpha_hat);
    let s = t + lh * (student.beta + student.beta_hat);
    Variability {
        delta_t: (1.0 - t).abs(),
        delta_s: (1.0 - s).abs(),
    }
}

/// ε(z) = σ(z) − ½ − z/4.
pub fn maclaurin_residual(z: f64) -> f64 {
    sigmoid(z) - 0.5 - 0.25 * z
}

/// (ζ, ζ′): summed linearization residuals of the teacher and student systems.
///
/// The second equation of each pair is expanded as 1 − σ(z) = σ(−z), so its
/// residual is taken at −z.
pub fn maclaurin_residuals(teacher: &TeacherDual, student: &StudentDual, set: &CorruptionSetting) -> (f64, f64) {
    let (z1, z2) = set.args(teacher.alpha, teacher.alpha_hat);
    let (z3, z4) = set.args(student.beta, student.beta_hat);
    (
        maclaurin_residual(z1) + maclaurin_residual(-z2),
        maclaurin_residual(z3) + maclaurin_residual(-z4),
    )
}

/// Profiles obtained by dropping the Maclaurin residuals (ζ = ζ′ = 0) and
/// letting n → ∞: λ̂α̂ = (1−p)/(1+r), λ̂α = p/(1+r), and the student adds a
/// further factor r/(1+r) of each.
pub fn first_order_predictions(set: &CorruptionSetting) -> (PredictionProfile, PredictionProfile) {
    let r = set.r();
    let flipped = (1.0 - set.p) / (1.0 + r);
    let clean = set.p / (1.0 + r);
    let boost = 1.0 + r / (1.0 + r);
    let mk = |bad1: f64, good1: f64| PredictionProfile {
        bad1,
        good1,
        bad0: 1.0 - bad1,
        good0: 1.0 - good1,
    };
    (mk(flipped, 1.0 - clean), mk(flipped * boost, 1.0 - clean * boost))
}

/// Duals of both classes from the unreduced per-group stationarity system.
///
/// Unknowns are the signed per-sample duals a = (clean₁, flipped₁, clean₀,
/// flipped₀) of λ̂a_i = t_i − σ((Ka)_i). Class 0 mirrors class 1, so the
/// answer should be (α, −α̂, −α, α̂).
pub fn solve_teacher_both_classes(set: &CorruptionSetting) -> Result<[f64; 4]> {
    let (cn, p, c, lh) = (set.cn(), set.p, set.c, set.lambda_hat);
    // Targets per group: observed labels.
    let targets = [1.0, 0.0, 0.0, 1.0];
    let eval = |a: &[f64; 4]| -> ([f64; 4], [f64; 4]) {
        let mut f = [0.0; 4];
        let mut v = [0.0; 4];
        for class in 0..2 {
            let (g, b) = (2 * class, 2 * class + 1);
            let m = cn * ((1.0 - p) * a[g] + p * a[b]);
            v[g] = m + (1.0 - c) * a[g];
            v[b] = m + (1.0 - c) * a[b];
        }
        for i in 0..4 {
            f[i] = lh * a[i] - targets[i] + sigmoid(v[i]);
        }
        (f, v)
    };
    // Start from zero rather than the reduced solution so that the check is
    // not circular.
    let mut a = [0.0; 4];
    for _ in 0..NEWTON_ITERS {
        let (f, v) = eval(&a);
        let merit = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if merit <= RESIDUAL_TOL {
            return Ok(a);
        }
        // Jacobian is block diagonal: 2×2 per class.
        let mut step = [0.0; 4];
        for class in 0..2 {
            let (g, b) = (2 * class, 2 * class + 1);
            let dg = sigmoid(v[g]) * (1.0 - sigmoid(v[g]));
            let db = sigmoid(v[b]) * (1.0 - sigmoid(v[b]));
            let j11 = lh + dg * (cn * (1.0 - p) + 1.0 - c);
            let j12 = dg * cn * p;
            let j21 = db * cn * (1.0 - p);
            let j22 = lh + db * (cn * p + 1.0 - c);
            let det = j11 * j22 - j12 * j21;
            step[g] = -(j22 * f[g] - j12 * f[b]) / det;
            step[b] = -(-j21 * f[g] + j11 * f[b]) / det;
        }
        let mut scale = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let trial: [f64; 4] = std::array::from_fn(|i| a[i] + scale * step[i]);
            let (tf, _) = eval(&trial);
            let tm = tf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if tm < merit {
                a = trial;
                break;
            }
            scale *= 0.5;
        }
        if scale < 0.5f64.powi(MAX_HALVINGS as i32) {
            break;
        }
    }
    let (f, _) = eval(&a);
    let merit = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if merit <= 1e-10 {
        Ok(a)
    } else {
        Err(Error::Solver {
            iterations: NEWTON_ITERS,
            residual: merit,
        })
    }
}

/// One p-grid row of the accuracy figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub p: f64,
    pub teacher_acc: f64,
    pub student_acc: f64,
    pub teacher: PredictionProfile,
    pub student: PredictionProfile,
    pub variability: Variability,
    pub zeta: f64,
    pub zeta_prime: f64,
}

/// Solve teacher and student at one setting and summarize.
pub fn solve_row(set: &CorruptionSetting) -> Result<FigureRow> {
    let t = solve_teacher(set)?;
    let s = solve_student(set, &t)?;
    let tp = teacher_predictions(&t, set)?;
    let sp = student_predictions(&s, &t, set)?;
    let (zeta, zeta_prime) = maclaurin_residuals(&t, &s, set);
    Ok(FigureRow {
        p: set.p,
        teacher_acc: group_accuracy(&tp, set.p),
        student_acc: group_accuracy(&sp, set.p),
        teacher: tp,
        student: sp,
        variability: variability(&tp, &sp),
        zeta,
        zeta_prime,
    })
}

/// p grid k·step for k = 1, 2, … while p < 0.5.
pub fn p_grid(step: f64) -> Vec<f64> {
    let count = (0.5 / step).ceil() as usize;
    (1..count)
        .map(|k| k as f64 * step)
        .filter(|&p| p < 0.5 - 1e-12)
        .collect()
}

/// Largest run of consecutive grid points around `inside` where the student
/// is perfect and the teacher scores exactly 1 − p.
pub fn scan_actual_interval(rows: &[FigureRow], inside: f64) -> Option<(f64, f64)> {
    let good = |r: &FigureRow| r.student_acc == 1.0 && (r.teacher_acc - (1.0 - r.p)).abs() < 1e-12;
    let centre = rows
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.p - inside).abs().total_cmp(&(b.1.p - inside).abs()))?
        .0;
    if !good(&rows[centre]) {
        return None;
    }
    let mut lo = centre;
    while lo > 0 && good(&rows[lo - 1]) {
        lo -= 1;
    }
    let mut hi = centre;
    while hi + 1 < rows.len() && good(&rows[hi + 1]) {
        hi += 1;
    }
    Some((rows[lo].p, rows[hi].p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_relative_eq!(sigmoid(2.0) + sigmoid(-2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_at_centre_is_zero() {
        assert_eq!(maclaurin_residual(0.0), 0.0);
    }

    #[test]
    fn interval_examples() {
        let i = thm1_p_interval(0.2);
        assert!((i.lo - 0.4231).abs() < 1e-4 && (i.hi - 0.4754).abs() < 1e-4);
        assert!(i.guaranteed && !i.is_empty());
        assert!(!thm1_p_interval(0.9).guaranteed);
    }

    #[test]
    fn settings_are_validated() {
        assert!(CorruptionSetting::new(100.0, 0.5, 0.3, 1.0).is_err());
        assert!(CorruptionSetting::new(100.0, 0.2, 1.0, 1.0).is_err());
        assert!(CorruptionSetting::new(100.0, 0.2, 0.3, 0.0).is_err());
        let s = CorruptionSetting::from_r(100.0, 0.2, 0.1, 0.3).unwrap();
        assert_relative_eq!(s.r(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn first_order_matches_hand_values() {
        let set = CorruptionSetting::new(50000.0, 0.45, 0.25, 0.75).unwrap();
        let (t, s) = first_order_predictions(&set);
        assert_relative_eq!(t.bad1, 0.44, epsilon = 1e-12);
        assert_relative_eq!(t.good1, 0.64, epsilon = 1e-12);
        assert_relative_eq!(s.bad1, 0.528, epsilon = 1e-12);
        assert_relative_eq!(s.good1, 0.568, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_tie_goes_to_class_zero() {
        let prof = PredictionProfile {
            bad1: 0.5,
            good1: 0.9,
            bad0: 0.5,
            good0: 0.1,
        };
        // Class-1 flipped points at exactly ½ are wrong, class-0 ones right.
        assert_relative_eq!(group_accuracy(&prof, 0.2), 0.5 * (0.8 + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn teacher_solution_has_tiny_residual() {
        let set = CorruptionSetting::new(5000.0, 0.45, 0.1, 0.75).unwrap();
        let t = solve_teacher(&set).unwrap();
        assert!(max_abs(t.residual) <= RESIDUAL_TOL);
        assert!(t.alpha >= 0.0 && t.alpha_hat >= 0.0);
    }

    #[test]
    fn fallback_agrees_with_newton() {
        let set = CorruptionSetting::new(5000.0, 0.42, 0.1, 1.125).unwrap();
        let off = Offsets {
            flipped: 0.0,
            clean: 0.0,
        };
        let (bx, bxh) = nested_bisection(&set, off);
        let t = solve_teacher(&set).unwrap();
        assert!((bx - t.alpha).abs() < 1e-9);
        assert!((bxh - t.alpha_hat).abs() < 1e-9);
    }
}
