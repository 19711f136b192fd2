use thiserror::Error;

/// Errors produced while parsing inputs, validating states or simulating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cut points must be strictly decreasing (got {0:?})")]
    NonMonotoneCuts(Vec<f64>),

    #[error("level {level} outside 0..{levels}")]
    LevelOutOfRange { level: u32, levels: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective is not finite at coordinate {0}")]
    NonFinite(usize),

    #[error("simulation diverged at iteration {iteration}: {message}; try a smaller time step")]
    Divergence { iteration: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
