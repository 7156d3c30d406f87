//! Command-line front end for the sd-lab experiments.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config_text, ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] sd_lab::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    /// 1 invalid input, 2 I/O, 3 solver.
    pub fn exit_code(&self) -> i32 {
        use sd_lab::Error as E;
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidInput(_) | E::DegenerateDesign(_) | E::Parse { .. } => 1,
                E::Io(_) => 2,
                E::Bracketing(_) | E::Solver { .. } | E::InconsistentSolution(_) | E::StepSize(_) => 3,
            },
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) | CliError::Format(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

/// What a command produced. Files are written by the caller, one at a time.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub stdout: Option<String>,
    /// Non-zero when the command finished but too many grid points failed.
    pub exit_code: i32,
}

/// Resolve the config for `command` from an optional file and trailing flags.
pub fn resolve(command: &str, config_file: Option<&std::path::Path>, flags: &[String]) -> Result<RunConfig, CliError> {
    let entries = match config_file {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    let pairs = config::parse_flag_pairs(flags)?;
    Ok(RunConfig::resolve(command, &entries, &pairs)?)
}

/// Write every file, creating the output directory if needed.
pub fn write_outcome(outcome: &Outcome) -> Result<(), CliError> {
    for (path, bytes) in &outcome.files {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, bytes)?;
        eprintln!("wrote {}", path.display());
    }
    if let Some(s) = &outcome.stdout {
        let mut out = std::io::stdout().lock();
        writeln!(out, "{s}")?;
    }
    Ok(())
}
