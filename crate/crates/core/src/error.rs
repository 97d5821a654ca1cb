use thiserror::Error;

/// Errors raised by the analytics, solver and simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented invariant (shares, indices, partitions).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric argument fell outside the domain where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input is well-formed but degenerate for the requested metric.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An iterative method did not converge.
    #[error("no convergence after {iterations} iterations (residual {residual:e}): {what}")]
    Convergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// A model exceeded its configured size ceiling.
    #[error("capacity exceeded: {what} has {count} entries, ceiling is {ceiling}")]
    Capacity {
        what: String,
        count: usize,
        ceiling: usize,
    },

    /// A probability row or stationary vector failed its consistency check.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// No parameter value satisfies the request.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, make: impl FnOnce() -> Error) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(make())
    }
}
