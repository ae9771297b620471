use thiserror::Error;

/// Errors raised across the tuner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {name}={value} outside [1, {max}]")]
    ParamOutOfRange {
        name: &'static str,
        value: u32,
        max: u32,
    },

    #[error("invalid network profile: {0}")]
    InvalidNetwork(String),

    #[error("invalid file {path}: {reason}")]
    InvalidFile { path: String, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid history entry: {0}")]
    InvalidEntry(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("chunk {chunk}: {message}")]
    Executor { chunk: usize, message: String },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
