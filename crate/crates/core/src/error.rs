use thiserror::Error;

/// Errors produced by the detection library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("series too short: need at least {required} samples, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("series is empty")]
    EmptySeries,

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("circulant embedding eigenvalue {index} is negative ({value:e})")]
    NegativeEigenvalue { index: usize, value: f64 },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
