use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate trap: {0}")]
    DegenerateTrap(String),

    #[error("field singularity: {0}")]
    Singularity(String),

    #[error("solver failure: {message} (condition estimate {condition:.3e}, residual {residual:.3e})")]
    SolverFailure {
        message: String,
        condition: f64,
        residual: f64,
    },

    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence {
        iterations: usize,
        message: String,
        /// Objective value at the end of each outer iteration.
        trace: Vec<f64>,
    },

    #[error("unstable equilibrium: Hessian eigenvalues {eigenvalues:?}")]
    UnstableEquilibrium { eigenvalues: Vec<f64> },

    #[error("numerical differentiation: {0}")]
    NumericalDifferentiation(String),

    #[error("integrator energy drift {drift:.3e} exceeds {limit:.1e}")]
    IntegratorAccuracy { drift: f64, limit: f64 },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("fit failed: {message}")]
    Fit {
        message: String,
        /// Residual sum of squares per iteration.
        trace: Vec<f64>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("at tilt {theta_deg:.3}°: {source}")]
    AtTilt {
        theta_deg: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Rejects non-finite or non-positive values.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
