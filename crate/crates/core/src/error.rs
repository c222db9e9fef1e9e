use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolveResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (bad shapes, non-stochastic rows, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Argument outside the domain of a numerical routine.
    #[error("domain error: {0}")]
    Domain(String),

    /// Optimistic calibration produced an adjusted threshold that is not below 0.5.
    #[error("calibrated threshold {threshold} is outside (0, 0.5) for epsilon={epsilon}, theta={theta}")]
    CalibrationOutOfRange {
        epsilon: f64,
        theta: f64,
        threshold: f64,
    },

    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        residual: f64,
        iterations: usize,
        best: Box<SolveResult>,
    },

    #[error("policy enumeration too large: {count} deterministic policies exceeds the bound {bound}")]
    EnumerationTooLarge { count: f64, bound: usize },

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
