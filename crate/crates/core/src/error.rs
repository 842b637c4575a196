use std::fmt;

use crate::solver::Solution;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// User-supplied data (tabulated initial data, cache files) is unusable.
    #[error("input error: {0}")]
    Input(String),

    /// A configuration is inconsistent, e.g. the truncation window does not fit the grid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical invariant the algorithm relies on broke down.
    #[error("internal error: {0}")]
    Internal(String),

    /// Picard iteration exhausted its budget on one window.
    #[error("{0}")]
    NonConvergence(Box<NonConvergence>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Residual history of a window that failed to converge, plus whatever was
/// solved before it.
#[derive(Debug)]
pub struct NonConvergence {
    pub window: usize,
    pub t_start: f64,
    pub residuals: Vec<f64>,
    pub partial: Option<Solution>,
}

impl fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Picard iteration did not converge in window {} (t = {}) after {} iterations, last residual {:e}",
            self.window,
            self.t_start,
            self.residuals.len(),
            self.residuals.last().copied().unwrap_or(f64::NAN)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
