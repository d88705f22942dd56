use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] dirattack_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown problem {name:?}; valid problems: {valid}")]
    UnknownProblem { name: String, valid: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;
