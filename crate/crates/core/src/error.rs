use std::io;

use thiserror::Error;

/// Errors raised by the numerical routines and the file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("bracketing failed: {0}")]
    Bracketing(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("inconsistent solution: {0}")]
    InconsistentSolution(String),

    #[error("step size collapsed: {0}")]
    StepSize(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
