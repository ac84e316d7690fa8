use thiserror::Error;

/// Errors for domain, configuration and solver failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value fails validation before any computation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A normalization or check is undefined for the given data.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The `I(p)` integrand is singular for the given gradient pair.
    #[error("singular case: {0}")]
    Singular(String),

    /// The minimizer ran out of its iteration budget. The best iterate
    /// and its report are carried so no partial answer is silent.
    #[error("solver did not converge within {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Box<crate::solver::SolveOutput>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
