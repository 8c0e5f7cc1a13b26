//! Key-value state and the rule for applying delivered commands.
//!
//! Causal delivery orders causally related writes but says nothing about
//! concurrent ones. Conflicts are resolved last-writer-wins over the total
//! order `(sum of message clock, sender id)`: a write replaces the current
//! entry only if its tag is greater. That order extends the causal order
//! (`a < b` implies `sum(a) < sum(b)`), so a causally later write always
//! wins and every replica picks the same winner whatever the interleaving.
//! Deletes leave tombstones carrying their tag; they are never collected.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use cbcast::{Message, ProcessId, VectorClock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Replicated command. Wire form: `{"op":"put","key":"a","value":1}` or
/// `{"op":"delete","key":"a"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum KvCommand {
    Put { key: String, value: Value },
    Delete { key: String },
}

impl KvCommand {
    pub fn key(&self) -> &str {
        match self {
            KvCommand::Put { key, .. } | KvCommand::Delete { key } => key,
        }
    }
}

/// Identity of the write that produced an entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tag {
    pub vc: VectorClock,
    pub sender: ProcessId,
}

impl Tag {
    pub fn of<R>(m: &Message<R>) -> Self {
        Self {
            vc: m.vc.clone(),
            sender: m.sender,
        }
    }

    fn rank(&self) -> (u64, ProcessId) {
        (self.vc.sum(), self.sender)
    }

    /// Whether a write tagged `self` replaces one tagged `incumbent`.
    pub fn beats(&self, incumbent: &Tag) -> bool {
        self.rank().cmp(&incumbent.rank()) == Ordering::Greater
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entry {
    /// `None` marks a tombstone.
    pub value: Option<Value>,
    pub tag: Tag,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Store {
    entries: BTreeMap<String, Entry>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Live value for `key`; tombstones read as absent.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key).and_then(|e| e.value.as_ref())
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    /// Live keys and values.
    pub fn live(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries
            .iter()
            .filter_map(|(k, e)| e.value.as_ref().map(|v| (k.as_str(), v)))
    }

    /// Applies a delivered command. Returns whether it took effect.
    pub fn apply(&mut self, m: &Message<KvCommand>) -> bool {
        let tag = Tag::of(m);
        let (key, value) = match &m.raw {
            KvCommand::Put { key, value } => (key, Some(value.clone())),
            KvCommand::Delete { key } => (key, None),
        };
        match self.entries.get(key) {
            Some(current) if !tag.beats(&current.tag) => false,
            _ => {
                self.entries.insert(key.clone(), Entry { value, tag });
                true
            }
        }
    }

    /// Serialization with sorted keys, tags and tombstones included; equal
    /// stores produce identical strings.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("store values are plain JSON")
    }
}

/// Value-returning form of [`Store::apply`].
pub fn apply_command(mut store: Store, m: &Message<KvCommand>) -> Store {
    store.apply(m);
    store
}
