use thiserror::Error;

use crate::vector_clock::ProcessId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vector clock length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("process id {id} out of range for cluster of {len}")]
    IndexOutOfRange { id: ProcessId, len: usize },

    #[error("event not present in execution: {0}")]
    EventNotFound(String),

    #[error("drain made no progress: {0}")]
    Stalled(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}
