use thiserror::Error;

use crate::scene::AgentId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown target id {0}")]
    UnknownTarget(AgentId),

    #[error("agent {0} has no valid state at the current time step")]
    InvalidCurrentState(AgentId),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("track {0} is missing derived kinematics")]
    MissingKinematics(AgentId),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("key sets differ: {0}")]
    KeyMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
