use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty public sample")]
    EmptyPublicSample,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("objective is not convex over linear_ball: {0}")]
    NonConvex(String),

    #[error("instance too large for halfspace enumeration: {points} distinct points (limit {limit})")]
    InstanceTooLarge { points: usize, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solver stopped after {iterations} iterations with certified gap {achieved:.3e} (requested {requested:.3e})")]
    SolverFailure {
        iterations: usize,
        achieved: f64,
        requested: f64,
    },

    #[error("underpowered audit: {trials} trials (minimum {minimum})")]
    Underpowered { trials: usize, minimum: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
