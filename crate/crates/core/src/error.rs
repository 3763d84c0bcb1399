use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("supersolution window violated: {0}")]
    Window(String),
    #[error("integration error: non-finite integrand at r = {abscissa}")]
    Integration { abscissa: f64 },
    #[error("integration did not converge after {intervals} intervals (last estimates {prev:e}, {last:e})")]
    NoConvergence { intervals: usize, prev: f64, last: f64 },
    #[error("singular banded system at pivot {row} (condition estimate {condition:e})")]
    Singular { row: usize, condition: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("fit refused: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
