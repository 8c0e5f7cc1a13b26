//! Events and per-process histories.

use std::fmt;
use std::sync::Arc;

use serde::ser::{Serialize, Serializer};

use crate::message::{Message, MessageId};
use crate::vector_clock::{ProcessId, VectorClock};

/// Something that happened on a process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event<R> {
    Broadcast(Message<R>),
    /// Delivery of a message on the process with the given id.
    Deliver(ProcessId, Message<R>),
}

impl<R> Event<R> {
    pub fn message(&self) -> &Message<R> {
        match self {
            Event::Broadcast(m) | Event::Deliver(_, m) => m,
        }
    }

    pub fn id(&self) -> EventId {
        match self {
            Event::Broadcast(m) => EventId::broadcast(m.id()),
            Event::Deliver(pid, m) => EventId::deliver(*pid, m.id()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Broadcast,
    Deliver(ProcessId),
}

/// Payload-free identity of an event: its kind plus the message identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId {
    pub kind: EventKind,
    pub message: MessageId,
}

impl EventId {
    pub const fn broadcast(message: MessageId) -> Self {
        Self {
            kind: EventKind::Broadcast,
            message,
        }
    }

    pub const fn deliver(pid: ProcessId, message: MessageId) -> Self {
        Self {
            kind: EventKind::Deliver(pid),
            message,
        }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EventKind::Broadcast => write!(f, "broadcast({})", self.message),
            EventKind::Deliver(pid) => write!(f, "deliver_{pid}({})", self.message),
        }
    }
}

struct Node<R> {
    event: Event<R>,
    next: Link<R>,
}

type Link<R> = Option<Arc<Node<R>>>;

/// A process history: a persistent list of events, newest first.
///
/// Adding an event shares the existing list instead of copying it, so a
/// state transition costs O(1) in the history regardless of its length and
/// old states stay valid.
pub struct History<R> {
    head: Link<R>,
    len: usize,
}

impl<R> History<R> {
    pub const fn new() -> Self {
        Self { head: None, len: 0 }
    }

    /// Builds a history from events listed in the order they occurred.
    pub fn from_chronological<I: IntoIterator<Item = Event<R>>>(events: I) -> Self {
        events
            .into_iter()
            .fold(Self::new(), |h, event| h.prepend(event))
    }

    /// New history with `event` as the newest entry.
    #[must_use]
    pub fn prepend(&self, event: Event<R>) -> Self {
        Self {
            head: Some(Arc::new(Node {
                event,
                next: self.head.clone(),
            })),
            len: self.len + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Newest event, if any.
    pub fn latest(&self) -> Option<&Event<R>> {
        self.head.as_deref().map(|node| &node.event)
    }

    /// Iterates newest first.
    pub fn iter(&self) -> Iter<'_, R> {
        Iter {
            next: self.head.as_deref(),
            remaining: self.len,
        }
    }

    /// Events oldest first.
    pub fn chronological(&self) -> Vec<&Event<R>> {
        let mut events: Vec<_> = self.iter().collect();
        events.reverse();
        events
    }

    /// Messages delivered on this history, oldest first.
    pub fn delivered(&self) -> impl Iterator<Item = &Message<R>> {
        self.chronological()
            .into_iter()
            .filter_map(|event| match event {
                Event::Deliver(_, m) => Some(m),
                Event::Broadcast(_) => None,
            })
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.iter().any(|event| event.id() == *id)
    }
}

/// Supremum of the clocks of all `Deliver` events in `history`; zeros when
/// there are none. A process's clock must always equal this value.
pub fn hist_vc<R>(history: &History<R>, n: usize) -> crate::Result<VectorClock> {
    let mut acc = VectorClock::new(n)?;
    for event in history.iter() {
        if let Event::Deliver(_, m) = event {
            acc.combine_in_place(&m.vc)?;
        }
    }
    Ok(acc)
}

impl<R> Default for History<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R> Clone for History<R> {
    fn clone(&self) -> Self {
        Self {
            head: self.head.clone(),
            len: self.len,
        }
    }
}

// Unlinks iteratively; the derived drop would recurse once per event.
impl<R> Drop for History<R> {
    fn drop(&mut self) {
        let mut link = self.head.take();
        while let Some(node) = link {
            match Arc::try_unwrap(node) {
                Ok(mut node) => link = node.next.take(),
                Err(_) => break,
            }
        }
    }
}

impl<R: PartialEq> PartialEq for History<R> {
    fn eq(&self, other: &Self) -> bool {
        if self.len != other.len {
            return false;
        }
        match (&self.head, &other.head) {
            (Some(a), Some(b)) if Arc::ptr_eq(a, b) => true,
            _ => self.iter().eq(other.iter()),
        }
    }
}

impl<R: Eq> Eq for History<R> {}

impl<R: fmt::Debug> fmt::Debug for History<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl<R: Serialize> Serialize for Event<R> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Event", 3)?;
        match self {
            Event::Broadcast(m) => {
                s.serialize_field("kind", "broadcast")?;
                s.serialize_field("pid", &m.sender)?;
                s.serialize_field("msg", m)?;
            }
            Event::Deliver(pid, m) => {
                s.serialize_field("kind", "deliver")?;
                s.serialize_field("pid", pid)?;
                s.serialize_field("msg", m)?;
            }
        }
        s.end()
    }
}

/// Serialized newest first, like the in-memory order.
impl<R: Serialize> Serialize for History<R> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

pub struct Iter<'a, R> {
    next: Option<&'a Node<R>>,
    remaining: usize,
}

impl<'a, R> Iterator for Iter<'a, R> {
    type Item = &'a Event<R>;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.next?;
        self.next = node.next.as_deref();
        self.remaining -= 1;
        Some(&node.event)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl<R> ExactSizeIterator for Iter<'_, R> {}

impl<'a, R> IntoIterator for &'a History<R> {
    type Item = &'a Event<R>;
    type IntoIter = Iter<'a, R>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}
