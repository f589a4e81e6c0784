use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("sample covariance is singular ({0}); add jitter to the targets or supply more rows")]
    SingularCovariance(String),

    #[error("Fisher information could not be factorized even with jitter at theta = {theta:?}")]
    SingularMetric { theta: Vec<f64> },

    #[error("non-finite gradient at stage {stage}, row {row}")]
    NonFiniteGradient { stage: usize, row: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure comes from the numerics rather than from the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::SingularCovariance(_)
                | Error::SingularMetric { .. }
                | Error::NonFiniteGradient { .. }
        )
    }
}

impl Error {
    /// Process exit code: 2 usage, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        if self.is_numeric() {
            4
        } else if matches!(
            self,
            Error::Usage(_) | Error::InvalidParameter(_) | Error::InvalidDimension(_)
        ) {
            2
        } else {
            3
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
