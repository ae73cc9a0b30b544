use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RtwError>;

#[derive(Debug, Error)]
pub enum RtwError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input carries no usable signal (all-zero TE matrix, rank zero).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An attention pattern whose unnormalized weights vanish.
    #[error("degenerate pattern: {0}")]
    DegeneratePattern(String),

    #[error("bank build failed: {0}")]
    Build(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RtwError::InvalidArgument(msg.into()))
}
