use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid aggregation weights: {0}")]
    InvalidWeights(String),

    #[error("key generation failed: {0}")]
    KeyGeneration(String),

    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("solver error: {0}")]
    Solver(String),

    /// Requested data does not exist for this result (e.g. a non-optimal solve).
    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("undefined reference value: {0}")]
    UndefinedReference(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// Scenario validation failure with itemized findings.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
