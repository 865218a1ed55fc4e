use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A value fell outside the range where the mechanism's guarantee holds
    /// (e.g. the Gaussian mechanism requires epsilon < 1).
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// Problem with input data (parsing, schema, degenerate classes).
    #[error("data error: {0}")]
    Data(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge within {iterations} iterations (gradient norm {grad_norm:.3e}, tolerance {tolerance:.3e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        tolerance: f64,
    },

    /// Requested privacy target cannot be met by the configuration.
    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
