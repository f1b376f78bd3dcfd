use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid dynamics model: {0}")]
    InvalidModel(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("primitive generation exhausted: produced {produced} of {requested} after {attempts} attempts")]
    GenerationExhausted {
        requested: usize,
        produced: usize,
        attempts: usize,
    },
    #[error("corrupt primitive file: {0}")]
    CorruptPrimitiveFile(String),
    #[error("goal of robot {robot} is in collision")]
    InvalidGoal { robot: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
