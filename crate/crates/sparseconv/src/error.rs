use thiserror::Error;

/// Errors produced by kernels, the performance model, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown layer: {0}")]
    UnknownLayer(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("validation gate failed: {0}")]
    ValidationGate(String),

    #[error("calibration unstable: {0}")]
    CalibrationUnstable(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
