//! Kernel logistic regression on random block Gram matrices.
//!
//! Each class has n samples whose features are the rows of a random n×n
//! factor Z. The class block of the kernel is ZZᵀ/n with its diagonal reset
//! to one; the two classes are orthogonal. The teacher is fit on hard labels
//! with the first ⌊np⌋ of each class flipped, the student on the teacher's
//! per-sample probabilities, and group averages of the fitted probabilities
//! are compared with the reduced two-unknown fixed point of
//! [`crate::logit_fixedpoint`].

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit_fixedpoint::{self, sigmoid, CorruptionSetting};
use crate::rng::{stream, stream_rng};

/// Rows per parallel chunk. Fixed so that reductions are order-independent.
const CHUNK: usize = 128;
const NEWTON_ITERS: usize = 100;
const CG_ITERS: usize = 1000;
const FIXED_POINT_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GramDist {
    Uniform01,
    Bernoulli(f64),
}

impl GramDist {
    /// Expected off-diagonal kernel entry.
    pub fn c_nominal(&self) -> f64 {
        match *self {
            GramDist::Uniform01 => 0.25,
            GramDist::Bernoulli(q) => q * q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramSpec {
    pub n: usize,
    pub p: f64,
    pub dist: GramDist,
    pub lambda_hat: f64,
    pub seed: u64,
}

impl GramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.p) {
            return Err(Error::invalid("p must lie in [0, 0.5)"));
        }
        if !(self.lambda_hat > 0.0 && self.lambda_hat.is_finite()) {
            return Err(Error::invalid("lambda_hat must be positive"));
        }
        if let GramDist::Bernoulli(q) = self.dist {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid("Bernoulli parameter must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn c_nominal(&self) -> f64 {
        self.dist.c_nominal()
    }

    /// Number of flipped samples per class.
    pub fn flipped(&self) -> usize {
        (self.n as f64 * self.p).floor() as usize
    }
}

/// Something that can apply a symmetric PSD kernel to a vector.
pub trait KernelOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);

    /// Diagonal of the kernel (used as CG preconditioner).
    fn diagonal(&self) -> Vec<f64>;
}

impl KernelOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.ncols()).map(|j| self[(i, j)] * v[j]).sum();
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self[(i, i)]).collect()
    }
}

/// One class block: row-major n×n factor and its row norms.
#[derive(Debug, Clone)]
struct Block {
    z: Vec<f32>,
    row_sq: Vec<f64>,
}

impl Block {
    fn new(z: Vec<f32>, n: usize) -> Self {
        let row_sq = z
            .chunks_exact(n)
            .map(|row| row.iter().map(|&x| f64::from(x) * f64::from(x)).sum())
            .collect();
        Self { z, row_sq }
    }

    fn apply(&self, n: usize, v: &[f64], out: &mut [f64]) {
        // w = Zᵀv, reduced over fixed row chunks in order.
        let partials: Vec<Vec<f64>> = self
            .z
            .par_chunks(CHUNK * n)
            .zip(v.par_chunks(CHUNK))
            .map(|(rows, vs)| {
                let mut w = vec![0.0; n];
                for (row, &vi) in rows.chunks_exact(n).zip(vs) {
                    for (wk, &zk) in w.iter_mut().zip(row) {
                        *wk += f64::from(zk) * vi;
                    }
                }
                w
            })
            .collect();
        let mut w = vec![0.0; n];
        for part in &partials {
            for (a, b) in w.iter_mut().zip(part) {
                *a += b;
            }
        }
        let inv_n = 1.0 / n as f64;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| {
                for (k, o) in chunk.iter_mut().enumerate() {
                    let i = ci * CHUNK + k;
                    let row = &self.z[i * n..(i + 1) * n];
                    let dot: f64 = row.iter().zip(&w).map(|(&z, &wk)| f64::from(z) * wk).sum();
                    *o = dot * inv_n + (1.0 - self.row_sq[i] * inv_n) * v[i];
                }
            });
    }

    fn mean_off_diagonal(&self, n: usize) -> f64 {
        let mut col_sum = vec![0.0; n];
        for row in self.z.chunks_exact(n) {
            for (s, &x) in col_sum.iter_mut().zip(row) {
                *s += f64::from(x);
            }
        }
        let total: f64 = col_sum.iter().map(|s| s * s).sum();
        let diag: f64 = self.row_sq.iter().sum();
        (total - diag) / n as f64 / (n as f64 * (n as f64 - 1.0))
    }
}

/// The two factor blocks and the label layout. The kernel is never formed.
#[derive(Debug, Clone)]
pub struct GramFactors {
    n: usize,
    class1: Block,
    class0: Block,
    /// Observed (possibly flipped) labels; first n true class 1, last n true class 0.
    pub observed: Vec<f64>,
    pub truth: Vec<f64>,
    flipped: usize,
}

impl GramFactors {
    /// Assemble from explicit row-major n×n factors.
    pub fn from_parts(n: usize, z1: Vec<f32>, z0: Vec<f32>, flipped: usize) -> Result<Self> {
        if n < 2 || z1.len() != n * n || z0.len() != n * n {
            return Err(Error::invalid("factors must be n×n with n ≥ 2"));
        }
        if flipped > n {
            return Err(Error::invalid("cannot flip more samples than a class holds"));
        }
        let mut truth = vec![1.0; n];
        truth.extend(std::iter::repeat_n(0.0, n));
        let mut observed = truth.clone();
        for i in 0..flipped {
            observed[i] = 0.0;
            observed[n + i] = 1.0;
        }
        Ok(Self {
            n,
            class1: Block::new(z1, n),
            class0: Block::new(z0, n),
            observed,
            truth,
            flipped,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flipped(&self) -> usize {
        self.flipped
    }

    /// Mean off-diagonal kernel entry of (class 1, class 0).
    pub fn mean_off_diagonal(&self) -> (f64, f64) {
        (self.class1.mean_off_diagonal(self.n), self.class0.mean_off_diagonal(self.n))
    }

    /// Dense kernel; only sensible for small n.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        for (off, block) in [(0, &self.class1), (n, &self.class0)] {
            for i in 0..n {
                for j in 0..n {
                    k[(off + i, off + j)] = if i == j {
                        1.0
                    } else {
                        let ri = &block.z[i * n..(i + 1) * n];
                        let rj = &block.z[j * n..(j + 1) * n];
                        ri.iter().zip(rj).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum::<f64>() / n as f64
                    };
                }
            }
        }
        k
    }
}

impl KernelOp for GramFactors {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (o1, o0) = out.split_at_mut(n);
        self.class1.apply(n, &v[..n], o1);
        self.class0.apply(n, &v[n..], o0);
    }

    fn diagonal(&self) -> Vec<f64> {
        vec![1.0; 2 * self.n]
    }
}

fn draw_block(dist: GramDist, n: usize, seed: u64, id: u64) -> Vec<f32> {
    let mut rng = stream_rng(seed, id);
    match dist {
        GramDist::Uniform01 => (0..n * n).map(|_| rng.random::<f32>()).collect(),
        GramDist::Bernoulli(q) => (0..n * n)
            .map(|_| if rng.random::<f64>() < q { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Draw both factors and lay out the labels.
pub fn build_factors(spec: &GramSpec) -> Result<GramFactors> {
    spec.validate()?;
    let z1 = draw_block(spec.dist, spec.n, spec.seed, stream::GRAM_CLASS1);
    let z0 = draw_block(spec.dist, spec.n, spec.seed, stream::GRAM_CLASS0);
    GramFactors::from_parts(spec.n, z1, z0, spec.flipped())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualSolver {
    /// Newton steps with conjugate gradients and Armijo backtracking.
    NewtonCg,
    /// a ← (1−ω)a + ω(t − σ(Ka))/λ̂ with ω halved whenever the residual grows.
    FixedPoint,
}

/// A fitted dual vector with its kernel scores and probabilities.
#[derive(Debug, Clone)]
pub struct KernelModel {
    pub dual: Vec<f64>,
    pub targets: Vec<f64>,
    /// v = Ka.
    pub scores: Vec<f64>,
    /// σ(v).
    pub predictions: Vec<f64>,
    /// max_i |λ̂a_i − t_i + σ(v_i)|.
    pub residual: f64,
    pub iterations: usize,
}

fn stationarity(lambda_hat: f64, a: &[f64], t: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let f: Vec<f64> = a
        .iter()
        .zip(t)
        .zip(v)
        .map(|((&ai, &ti), &vi)| lambda_hat * ai - ti + sigmoid(vi))
        .collect();
    let m = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (f, m)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Σ BCE(t_i, σ(v_i)) + (λ̂/2) aᵀv.
fn objective(lambda_hat: f64, a: &[f64], t: &[f64], v: &[f64]) -> f64 {
    let mut loss = 0.0;
    let mut quad = 0.0;
    for ((&ai, &ti), &vi) in a.iter().zip(t).zip(v) {
        loss += softplus(vi) - ti * vi;
        quad += ai * vi;
    }
    loss + 0.5 * lambda_hat * quad
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve (λ̂D⁻¹ + K)x = b by preconditioned CG.
fn cg<K: KernelOp + ?Sized>(k: &K, shift: &[f64], b: &[f64], rel_tol: f64) -> Vec<f64> {
    let m = b.len();
    let kdiag = k.diagonal();
    let precond: Vec<f64> = shift.iter().zip(&kdiag).map(|(s, d)| 1.0 / (s + d)).collect();
    let mut x = vec![0.0; m];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(b, b).sqrt();
    let mut kp = vec![0.0; m];
    for _ in 0..CG_ITERS {
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            break;
        }
        k.apply(&p, &mut kp);
        for i in 0..m {
            kp[i] += shift[i] * p[i];
        }
        let alpha = rz / dot(&p, &kp);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        for i in 0..m {
            z[i] = r[i] * precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Fit λ̂a_i = t_i − σ((Ka)_i) for all i.
pub fn fit_dual<K: KernelOp + ?Sized>(
    k: &K,
    targets: &[f64],
    lambda_hat: f64,
    tol: f64,
    solver: DualSolver,
) -> Result<KernelModel> {
    let m = k.dim();
    if targets.len() != m {
        return Err(Error::invalid(format!("expected {m} targets, got {}", targets.len())));
    }
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::invalid("targets must lie in [0, 1]"));
    }
    if !(lambda_hat > 0.0) {
        return Err(Error::invalid("lambda_hat must be positive"));
    }
    match solver {
        DualSolver::NewtonCg => newton_cg(k, targets, lambda_hat, tol),
        DualSolver::FixedPoint => fixed_point(k, targets, lambda_hat, tol),
    }
}

fn finish<K: KernelOp + ?Sized>(k: &K, a: Vec<f64>, t: &[f64], lambda_hat: f64, iterations: usize) -> KernelModel {
    let mut v = vec![0.0; a.len()];
    k.apply(&a, &mut v);
    let (_, residual) = stationarity(lambda_hat, &a, t, &v);
    KernelModel {
        predictions: v.iter().map(|&x| sigmoid(x)).collect(),
        scores: v,
        dual: a,
        targets: t.to_vec(),
        residual,
        iterations,
    }
}

fn newton_cg<K: KernelOp + ?Sized>(k: &K, t: &[f64], lambda_hat: f64, tol: f64) -> Result<KernelModel> {
    let m = k.dim();
    let mut a = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut kd = vec![0.0; m];
    let (mut f, mut res) = stationarity(lambda_hat, &a, t, &v);
    let mut obj = objective(lambda_hat, &a, t, &v);
    for it in 0..NEWTON_ITERS {
        if res <= tol {
            return Ok(finish(k, a, t, lambda_hat, it));
        }
        let d: Vec<f64> = v.iter().map(|&x| {
            let s = sigmoid(x);
            (s * (1.0 - s)).max(1e-300)
        })
        .collect();
        let shift: Vec<f64> = d.iter().map(|di| lambda_hat / di).collect();
        let rhs: Vec<f64> = f.iter().zip(&d).map(|(fi, di)| -fi / di).collect();
        let forcing = res.sqrt().clamp(1e-12, 0.1);
        let delta = cg(k, &shift, &rhs, forcing);
        k.apply(&delta, &mut kd);
        // ∇J = K F, so ∇Jᵀδ = Fᵀ(Kδ).
        let slope = dot(&f, &kd);
        if !(slope < 0.0) {
            break;
        }
        // A full step that halves the residual is taken as is; otherwise
        // backtrack on the objective.
        let full: Vec<f64> = a.iter().zip(&delta).map(|(x, y)| x + y).collect();
        let mut fv = vec![0.0; m];
        k.apply(&full, &mut fv);
        let (_, full_res) = stationarity(lambda_hat, &full, t, &fv);
        if full_res <= 0.5 * res {
            obj = objective(lambda_hat, &full, t, &fv);
            a = full;
        } else {
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let na: Vec<f64> = a.iter().zip(&delta).map(|(x, y)| x + step * y).collect();
                let nv: Vec<f64> = v.iter().zip(&kd).map(|(x, y)| x + step * y).collect();
                let nobj = objective(lambda_hat, &na, t, &nv);
                if nobj <= obj + 1e-4 * step * slope {
                    a = na;
                    obj = nobj;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        // Recompute v exactly to avoid drift from the incremental update.
        k.apply(&a, &mut v);
        (f, res) = stationarity(lambda_hat, &a, t, &v);
    }
    if res <= tol {
        return Ok(finish(k, a, t, lambda_hat, NEWTON_ITERS));
    }
    Err(Error::Solver {
        iterations: NEWTON_ITERS,
        residual: res,
    })
}

fn fixed_point<K: KernelOp + ?Sized>(k: &K, t: &[f64], lambda_hat: f64, tol: f64) -> Result<KernelModel> {
    let m = k.dim();
    let mut a = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut omega = 0.5;
    let (_, mut res) = stationarity(lambda_hat, &a, t, &v);
    for it in 0..FIXED_POINT_ITERS {
        if res <= tol {
            return Ok(finish(k, a, t, lambda_hat, it));
        }
        let na: Vec<f64> = a
            .iter()
            .zip(t)
            .zip(&v)
            .map(|((&ai, &ti), &vi)| (1.0 - omega) * ai + omega * (ti - sigmoid(vi)) / lambda_hat)
            .collect();
        let mut nv = vec![0.0; m];
        k.apply(&na, &mut nv);
        let (_, nres) = stationarity(lambda_hat, &na, t, &nv);
        if nres > res {
            omega *= 0.5;
            if omega < 1e-12 {
                break;
            }
            continue;
        }
        a = na;
        v = nv;
        res = nres;
    }
    if res <= tol {
        return Ok(finish(k, a, t, lambda_hat, FIXED_POINT_ITERS));
    }
    Err(Error::Solver {
        iterations: FIXED_POINT_ITERS,
        residual: res,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Bad,
    Good,
}

/// Group-averaged P(y=1) over true-class-1 samples next to the reduced prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: Model,
    pub group: Group,
    pub avg_pred: f64,
    pub a3_pred: f64,
}

/// Everything produced by one simulation.
#[derive(Debug, Clone)]
pub struct GramRun {
    pub rows: Vec<TableRow>,
    /// Averages of 1 − P(y=1) over true-class-0 (bad, good) samples, per model.
    pub class0: [(f64, f64); 2],
    pub teacher_residual: f64,
    pub student_residual: f64,
}

impl GramRun {
    pub fn get(&self, model: Model, group: Group) -> TableRow {
        *self
            .rows
            .iter()
            .find(|r| r.model == model && r.group == group)
            .expect("all four cells are present")
    }
}

fn group_means(pred: &[f64], n: usize, flipped: usize) -> ((f64, f64), (f64, f64)) {
    let mean = |s: &[f64]| if s.is_empty() { f64::NAN } else { s.iter().sum::<f64>() / s.len() as f64 };
    let inv = |s: &[f64]| if s.is_empty() { f64::NAN } else { 1.0 - mean(s) };
    (
        (mean(&pred[..flipped]), mean(&pred[flipped..n])),
        (inv(&pred[n..n + flipped]), inv(&pred[n + flipped..])),
    )
}

/// Fit teacher and student and tabulate group averages.
pub fn run_table(spec: &GramSpec) -> Result<GramRun> {
    run_table_with(spec, DualSolver::NewtonCg, 1e-9)
}

pub fn run_table_with(spec: &GramSpec, solver: DualSolver, tol: f64) -> Result<GramRun> {
    let factors = build_factors(spec)?;
    let n = spec.n;
    let teacher = fit_dual(&factors, &factors.observed, spec.lambda_hat, tol, solver)?;
    let student = fit_dual(&factors, &teacher.predictions, spec.lambda_hat, tol, solver)?;

    let set = CorruptionSetting::new(n as f64, spec.p, spec.c_nominal(), spec.lambda_hat)?;
    let td = logit_fixedpoint::solve_teacher(&set)?;
    let sd = logit_fixedpoint::solve_student(&set, &td)?;
    let tp = logit_fixedpoint::teacher_predictions(&td, &set)?;
    let sp = logit_fixedpoint::student_predictions(&sd, &td, &set)?;

    let flipped = factors.flipped();
    let (t1, t0) = group_means(&teacher.predictions, n, flipped);
    let (s1, s0) = group_means(&student.predictions, n, flipped);
    let row = |model, group, avg_pred, a3_pred| TableRow {
        model,
        group,
        avg_pred,
        a3_pred,
    };
    Ok(GramRun {
        rows: vec![
            row(Model::Teacher, Group::Bad, t1.0, tp.bad1),
            row(Model::Teacher, Group::Good, t1.1, tp.good1),
            row(Model::Student, Group::Bad, s1.0, sp.bad1),
            row(Model::Student, Group::Good, s1.1, sp.good1),
        ],
        class0: [t0, s0],
        teacher_residual: teacher.residual,
        student_residual: student.residual,
    })
}
