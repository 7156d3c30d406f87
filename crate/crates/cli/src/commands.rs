//! One function per subcommand. Each returns the files to write.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sd_lab::kernel_sim::{run_table_with, DualSolver, GramDist, GramSpec, Group, Model};
use sd_lab::lambda_tuning::{
    self, curve_record, harmonic_design, sweep_lambdas, minimize_e_reg, minimize_e_sd, equal_optimum_design, Bracket,
};
use sd_lab::logit_fixedpoint::{p_grid, solve_row, thm1_p_interval, CorruptionSetting};
use sd_lab::probe::io::{load_features, read_superclass_csv};
use sd_lab::probe::softmax::FitOptions;
use sd_lab::probe::{gaussian_clusters, xi_sweep, CorruptionKind, CorruptionSpec, FeatureDataset, ProbeConfig, ProbeResult, SyntheticSpec};
use sd_lab::rng::mix64;
use sd_lab::spectral_ridge::{NoiseSpec, SpectralDesign};

use crate::config::RunConfig;
use crate::output::{encode, extension, json_bytes};
use crate::{CliError, Outcome};

/// Fraction of grid points that must solve for a zero exit code.
const MIN_SOLVED: f64 = 0.95;

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command.as_str() {
        "ridge-sweep" => ridge_sweep(cfg),
        "logit-figure1" => logit_figure1(cfg),
        "gram-table" => gram_table(cfg),
        "probe-run" => probe(cfg, "probe_run"),
        "probe-sweep" => probe(cfg, "probe_sweep"),
        "xi-star" => xi_star(cfg),
        "lambda-compare" => lambda_compare(cfg),
        other => Err(CliError::Invalid(format!("unknown command {other:?}"))),
    }
}

fn out_path(cfg: &RunConfig, stem: &str) -> PathBuf {
    Path::new(cfg.get("out")).join(format!("{stem}.{}", extension(cfg)))
}

fn ridge_sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let design = harmonic_design();
    let mut files = Vec::new();
    for gamma in cfg.list("gamma") {
        let noise = NoiseSpec::from_gamma(gamma)?;
        if !(gamma > 0.0) {
            return Err(CliError::Invalid("gamma must be positive".into()));
        }
        let lambdas = cfg.auto_list("lambdas").unwrap_or_else(|| sweep_lambdas(gamma));
        let records = lambdas
            .par_iter()
            .map(|&l| curve_record(&design, noise, l))
            .collect::<Result<Vec<_>, _>>()?;
        files.push((out_path(cfg, &format!("ridge_sweep_gamma_{gamma}")), encode(cfg, &records)?));
    }
    Ok(Outcome {
        files,
        ..Default::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Record {
    pub p: f64,
    pub teacher_acc: Option<f64>,
    pub student_acc: Option<f64>,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub status: String,
}

fn logit_figure1(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (c, n, step) = (cfg.f64("c"), cfg.f64("n"), cfg.f64("p_step"));
    if !(step > 0.0 && step < 0.5) {
        return Err(CliError::Invalid("p_step must lie in (0, 0.5)".into()));
    }
    let mut files = Vec::new();
    let (mut solved, mut total) = (0usize, 0usize);
    for r in cfg.list("r") {
        let bound = thm1_p_interval(r);
        // Reject an invalid setting up front rather than per row.
        CorruptionSetting::from_r(n, 0.25, c, r)?;
        let records: Vec<Figure1Record> = p_grid(step)
            .par_iter()
            .map(|&p| {
                let row = CorruptionSetting::from_r(n, p, c, r).and_then(|s| solve_row(&s));
                let (teacher_acc, student_acc, status) = match row {
                    Ok(row) => (Some(row.teacher_acc), Some(row.student_acc), "ok".to_string()),
                    Err(e) => (None, None, format!("failed: {e}")),
                };
                Figure1Record {
                    p,
                    teacher_acc,
                    student_acc,
                    bound_lo: bound.lo,
                    bound_hi: bound.hi,
                    status,
                }
            })
            .collect();
        total += records.len();
        solved += records.iter().filter(|r| r.status == "ok").count();
        files.push((out_path(cfg, &format!("logit_figure1_r_{r}")), encode(cfg, &records)?));
    }
    let fraction = solved as f64 / total.max(1) as f64;
    if fraction < MIN_SOLVED {
        eprintln!("only {solved} of {total} rows solved");
    }
    Ok(Outcome {
        files,
        stdout: None,
        exit_code: if fraction >= MIN_SOLVED { 0 } else { 3 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramRecord {
    pub replicate: usize,
    pub seed: u64,
    pub model: Model,
    pub group: Group,
    /// `avg` for the simulated group mean, `a3` for the reduced prediction.
    pub quantity: String,
    pub value: f64,
}

fn gram_table(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dist = match cfg.get("dist") {
        "bernoulli" => GramDist::Bernoulli(cfg.f64("q")),
        _ => GramDist::Uniform01,
    };
    let solver = match cfg.get("solver") {
        "fixed-point" => DualSolver::FixedPoint,
        _ => DualSolver::NewtonCg,
    };
    let base = cfg.u64("seed");
    let reps = cfg.usize("replicates");
    if reps == 0 {
        return Err(CliError::Invalid("replicates must be at least 1".into()));
    }
    let runs = (0..reps)
        .map(|i| {
            let seed = mix64(base, i as u64);
            let spec = GramSpec {
                n: cfg.usize("n"),
                p: cfg.f64("p"),
                dist,
                lambda_hat: cfg.f64("lambda_hat"),
                seed,
            };
            run_table_with(&spec, solver, cfg.f64("tol")).map(|run| (i, seed, run))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    for (replicate, seed, run) in runs {
        for row in &run.rows {
            for (quantity, value) in [("avg", row.avg_pred), ("a3", row.a3_pred)] {
                records.push(GramRecord {
                    replicate,
                    seed,
                    model: row.model,
                    group: row.group,
                    quantity: quantity.into(),
                    value,
                });
            }
        }
    }
    Ok(Outcome {
        files: vec![(out_path(cfg, "gram_table"), encode(cfg, &records)?)],
        ..Default::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub seed_index: usize,
    pub seed: u64,
    pub xi: f64,
    pub teacher_test_acc: f64,
    pub student_test_acc: f64,
    pub improvement: f64,
    /// Mean over classes of the true-class probability range.
    pub teacher_variability: f64,
    pub student_variability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRunSummary {
    pub seed_index: usize,
    pub seed: u64,
    pub results: Vec<ProbeResult>,
}

fn dataset(cfg: &RunConfig, seed: u64) -> Result<FeatureDataset, CliError> {
    let size = cfg.usize("superclass_size");
    if cfg.get("features") == "synthetic" {
        return Ok(gaussian_clusters(&SyntheticSpec {
            classes: cfg.usize("classes"),
            dim: cfg.usize("dim"),
            train_per_class: cfg.usize("train_per_class"),
            test_per_class: cfg.usize("test_per_class"),
            separation: cfg.f64("separation"),
            superclass_size: (size > 0).then_some(size),
            seed,
        })?);
    }
    let (features, labels) = load_features(Path::new(cfg.get("features")))?;
    let superclass = match cfg.get("superclass") {
        "none" => None,
        path => Some(read_superclass_csv(std::io::BufReader::new(std::fs::File::open(path)?))?),
    };
    let observed = labels.iter().max().map_or(0, |m| m + 1);
    let classes = superclass.as_ref().map_or(observed, |s| s.len()).max(observed);
    let split = FeatureDataset::with_holdout(features, labels, classes, cfg.f64("test_fraction"), seed)?;
    Ok(FeatureDataset::new(split.features, split.labels, classes, superclass, split.train, split.test)?)
}

fn probe(cfg: &RunConfig, stem: &str) -> Result<Outcome, CliError> {
    let kind: CorruptionKind = cfg.get("corruption").parse()?;
    let mut probe_cfg = ProbeConfig::new(
        cfg.f64("lambda"),
        FitOptions {
            step_size: cfg.f64("step_size"),
            epochs: cfg.usize("epochs"),
            ..Default::default()
        },
    )?;
    if let Some(grid) = cfg.auto_list("lr_grid") {
        probe_cfg.step_grid = grid;
    }
    let xis = match cfg.command.as_str() {
        "probe-run" => vec![cfg.f64("xi")],
        _ => cfg.list("xi"),
    };
    let seeds = cfg.usize("seeds");
    if seeds == 0 {
        return Err(CliError::Invalid("seeds must be at least 1".into()));
    }
    let base = cfg.u64("seed");
    let runs = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let seed = mix64(base, i as u64);
            let data = dataset(cfg, seed)?;
            let mut spec = CorruptionSpec::new(kind, cfg.f64("level"), seed)?;
            spec.k = cfg.usize("k");
            let results = xi_sweep(&data, &spec, &xis, &probe_cfg)?;
            Ok(ProbeRunSummary {
                seed_index: i,
                seed,
                results,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let records: Vec<ProbeRecord> = runs
        .iter()
        .flat_map(|run| {
            run.results.iter().map(move |r| {
                let (tv, sv) = r.mean_variability();
                ProbeRecord {
                    seed_index: run.seed_index,
                    seed: run.seed,
                    xi: r.xi,
                    teacher_test_acc: r.teacher_test_acc,
                    student_test_acc: r.student_test_acc,
                    improvement: r.improvement,
                    teacher_variability: tv,
                    student_variability: sv,
                }
            })
        })
        .collect();
    let mut files = vec![(out_path(cfg, stem), encode(cfg, &records)?)];
    // The summary keeps the per-class variability pairs.
    let summary = Path::new(cfg.get("out")).join(format!("{stem}_summary.json"));
    files.push((summary, json_bytes(cfg, &runs)?));
    Ok(Outcome {
        files,
        ..Default::default()
    })
}

fn design(cfg: &RunConfig) -> Result<SpectralDesign, CliError> {
    let sigma = cfg.auto_list("sigma");
    let theta = cfg.auto_list("theta");
    match cfg.get("design") {
        "custom" => {
            let (Some(sigma), Some(theta)) = (sigma, theta) else {
                return Err(CliError::Invalid("custom design needs sigma and theta".into()));
            };
            let d = sigma.len();
            Ok(SpectralDesign::from_energies(sigma, &theta, cfg.f64("null_mass"), d)?)
        }
        named => {
            if sigma.is_some() || theta.is_some() {
                return Err(CliError::Invalid(format!("sigma and theta only apply to design = custom, not {named}")));
            }
            Ok(if named == "equal-optimum" { equal_optimum_design() } else { harmonic_design() })
        }
    }
}

fn xi_star(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let d = design(cfg)?;
    let noise = NoiseSpec::from_gamma(cfg.f64("gamma"))?;
    let v = lambda_tuning::xi_star(&d, noise, cfg.f64("lambda"))?;
    Ok(Outcome {
        stdout: Some(format!("{v}")),
        ..Default::default()
    })
}

fn lambda_compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let d = design(cfg)?;
    let noise = NoiseSpec::from_gamma(cfg.f64("gamma"))?;
    let default = Bracket::default_for(&d);
    let bracket = Bracket::new(
        cfg.auto_f64("lambda_lo")?.unwrap_or(default.lo),
        cfg.auto_f64("lambda_hi")?.unwrap_or(default.hi),
    )?;
    let reg = minimize_e_reg(&d, noise, bracket)?;
    let sd = minimize_e_sd(&d, noise, bracket)?;
    eprintln!("argmin e_reg = {}, argmin e_sd = {}", reg.lambda, sd.lambda);
    Ok(Outcome {
        stdout: Some(format!("{} {}", reg.value, sd.value)),
        ..Default::default()
    })
}
