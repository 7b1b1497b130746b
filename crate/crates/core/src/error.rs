use thiserror::Error;

/// Errors raised by the numerical routines and the experiment runner.
#[derive(Debug, Error)]
pub enum BrotocError {
    /// Shapes or bipartition dimensions do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input lies outside the domain of the requested quantity.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization failed or produced an out-of-tolerance residual.
    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    /// A spectrum did not satisfy the no-resonance condition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Requested problem exceeds the configured size caps.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Malformed experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BrotocError>;

impl BrotocError {
    pub(crate) fn numerical(message: impl Into<String>, residual: f64) -> Self {
        BrotocError::Numerical {
            message: message.into(),
            residual,
        }
    }
}
