use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("LP solver failure: {0}")]
    Solver(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("trace parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SchedError>;
