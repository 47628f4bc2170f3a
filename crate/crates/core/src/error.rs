//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by kernel construction, Monte Carlo estimators and
/// sphere simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (bad range, mismatched lengths).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A quadrature or series refused to converge to the requested tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// The requested operation is not defined for this kernel
    /// (e.g. second derivative at 1 is infinite).
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    /// A distribution parameter is outside its admissible set.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The kernel is in the wrong regime for this asymptotic formula.
    #[error("regime mismatch: {0}")]
    Regime(String),

    /// The nondegeneracy inequality gamma_L < (d+2)/2 failed.
    #[error("degeneracy condition violated: gamma_L = {gamma} >= {bound}")]
    Degeneracy { gamma: f64, bound: f64 },

    /// A numeric routine (e.g. eigensolver) failed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
