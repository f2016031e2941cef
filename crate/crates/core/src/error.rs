use thiserror::Error;

/// Errors raised by the sampler, its numerical kernels and the model layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("non-finite derivative at output {output}, input {input}")]
    NonFiniteDerivative { output: usize, input: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("failed to find an input satisfying the constraint after {restarts} restarts")]
    InitializationFailed { restarts: usize },

    #[error("position projection failed to converge (residual {residual:e})")]
    ProjectionFailed { residual: f64 },

    #[error("projection is not reversible (return error {distance:e})")]
    NonReversible { distance: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model does not support {0}")]
    Unsupported(&'static str),

    #[error("{0}")]
    Io(String),

    #[error("series has zero variance")]
    DegenerateSeries,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
