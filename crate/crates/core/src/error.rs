use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or distribution parameter is outside its domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// The grid cannot hold enough of the probability mass.
    #[error("truncation failure: {0}")]
    Truncation(String),

    /// Malformed or empty input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// Two cumulative functions live on incompatible supports.
    #[error("support mismatch: {0}")]
    Support(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An extrapolation or iterative estimate failed to settle.
    #[error("numerical instability: {0}")]
    NumericInstability(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Checks that `mu` is a probability.
pub(crate) fn check_probability(mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::parameter("mu", format!("{mu} is not in [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::parameter(name, format!("{value} must be finite and > 0")));
    }
    Ok(())
}
