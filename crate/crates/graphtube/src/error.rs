use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller input: geometry, coupling data, or parameters out of range.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Experiment configuration rejected before any computation ran.
    #[error("config error: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("factorization failed: {0}")]
    Factor(String),
    #[error("eigensolver failed: {0}")]
    Eigensolve(String),
    /// Problem size exceeds the configured safety guard.
    #[error("problem size {size} exceeds guard {guard}")]
    TooLarge { size: usize, guard: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
