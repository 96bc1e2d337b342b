use thiserror::Error;

/// Errors raised by the estimation, prediction and diagnostic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid model or algorithm configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data inconsistent with the requested operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A trend matrix without full column rank.
    #[error("model specification error: {0}")]
    ModelSpec(String),

    /// Cholesky factorization failed even after a diagonal jitter retry.
    #[error("covariance matrix is not positive definite ({0})")]
    SingularCovariance(String),

    /// Method not applicable to the censoring pattern at hand.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Non-finite objective, degenerate curvature and similar numerical breakdowns.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Failure inside a SAEM iteration, tagged with the iteration index.
    #[error("SAEM iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors that stem from numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularCovariance(_) | Error::Numerical(_) => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
