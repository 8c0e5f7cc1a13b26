use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vector_clock::{ProcessId, VectorClock};

/// A broadcast message: opaque payload plus the causality metadata the
/// protocol needs.
///
/// Wire form: `{"vc": [..], "sender": n, "raw": <payload>}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message<R> {
    /// Sender's clock right after it ticked its own entry for this message.
    pub vc: VectorClock,
    pub sender: ProcessId,
    pub raw: R,
}

impl<R> Message<R> {
    pub fn new(vc: VectorClock, sender: ProcessId, raw: R) -> Self {
        Self { vc, sender, raw }
    }

    /// `(sender, vc[sender])`, unique per broadcast.
    pub fn id(&self) -> MessageId {
        MessageId {
            sender: self.sender,
            seq: self.vc.get(self.sender).unwrap_or(0),
        }
    }

    pub fn map_raw<S>(self, f: impl FnOnce(R) -> S) -> Message<S> {
        Message {
            vc: self.vc,
            sender: self.sender,
            raw: f(self.raw),
        }
    }
}

/// Identity of a message: its sender and the sender's own clock entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId {
    pub sender: ProcessId,
    pub seq: u64,
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.sender, self.seq)
    }
}
