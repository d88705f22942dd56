use thiserror::Error;

/// Errors raised by problem construction, network handling and solver setup.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("layer {layer}: {reason}")]
    Layer { layer: usize, reason: String },

    #[error("weight file: {0}")]
    Format(String),

    #[error("point has non-finite entries")]
    NonFinitePoint,

    #[error("initial point is infeasible (largest constraint value {0})")]
    InfeasibleStart(f64),

    #[error("oracle attack supports at most {max} inputs, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
