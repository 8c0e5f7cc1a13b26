use cbcast::ProcessId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("keys must be non-empty")]
    EmptyKey,

    #[error("message clock has {got} entries, cluster has {expected}")]
    ClockLength { expected: usize, got: usize },

    #[error("message from unknown sender {0}")]
    UnknownSender(ProcessId),

    #[error("invalid node configuration: {0}")]
    Config(String),

    #[error("node is shutting down")]
    NotReady,

    #[error(transparent)]
    Protocol(#[from] cbcast::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
