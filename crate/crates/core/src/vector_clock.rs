//! Vector clocks and process identifiers.
//!
//! A [`VectorClock`] holds one event counter per process of a fixed-size
//! cluster, zero-indexed by [`ProcessId`]. Every binary operation requires
//! both operands to have the same length and fails with
//! [`Error::LengthMismatch`] otherwise; clocks are never truncated or padded.
//!
//! All operations are pure: they borrow their inputs and return fresh values.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a process; doubles as its index into every vector clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub usize);

impl ProcessId {
    pub const fn new(id: usize) -> Self {
        Self(id)
    }

    pub const fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl From<usize> for ProcessId {
    fn from(id: usize) -> Self {
        Self(id)
    }
}

/// A fixed-length vector of per-process event counters.
///
/// Serialized as a plain JSON array of non-negative integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorClock(Vec<u64>);

impl VectorClock {
    /// All-zero clock for a cluster of `n` processes.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "a vector clock needs at least one entry".into(),
            ));
        }
        Ok(Self(vec![0; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.0
    }

    /// Entry for `id`, or `None` if `id` is not an index of this clock.
    pub fn get(&self, id: ProcessId) -> Option<u64> {
        self.0.get(id.index()).copied()
    }

    /// Sum of all entries. Strictly monotone along `<`, so `(sum, sender)`
    /// extends the causal order to a total one.
    pub fn sum(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn check_index(&self, id: ProcessId) -> Result<()> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                id,
                len: self.len(),
            })
        }
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            })
        }
    }

    /// Copy of `self` with the entry for `id` incremented by one.
    pub fn tick(&self, id: ProcessId) -> Result<Self> {
        self.check_index(id)?;
        let mut entries = self.0.clone();
        entries[id.index()] += 1;
        Ok(Self(entries))
    }

    /// Pointwise maximum.
    pub fn combine(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (*a).max(*b))
                .collect(),
        ))
    }

    /// Pointwise maximum, in place. Used by folds that would otherwise
    /// allocate a clock per step.
    pub(crate) fn combine_in_place(&mut self, other: &Self) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = (*a).max(*b);
        }
        Ok(())
    }

    /// `self ≤ other`: every entry of `self` is at most the matching entry of `other`.
    pub fn less_equal(&self, other: &Self) -> Result<bool> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| a <= b))
    }

    /// `self < other`: `self ≤ other` and the clocks differ.
    pub fn less(&self, other: &Self) -> Result<bool> {
        Ok(self.less_equal(other)? && self != other)
    }

    /// Neither clock is `≤` the other.
    pub fn concurrent(&self, other: &Self) -> Result<bool> {
        Ok(!self.less_equal(other)? && !other.less_equal(self)?)
    }
}

impl From<Vec<u64>> for VectorClock {
    fn from(entries: Vec<u64>) -> Self {
        Self(entries)
    }
}

impl<const N: usize> From<[u64; N]> for VectorClock {
    fn from(entries: [u64; N]) -> Self {
        Self(entries.to_vec())
    }
}

/// `None` for concurrent clocks and for clocks of different lengths.
impl PartialOrd for VectorClock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self == other {
            return Some(Ordering::Equal);
        }
        if self.less_equal(other).ok()? {
            Some(Ordering::Less)
        } else if other.less_equal(self).ok()? {
            Some(Ordering::Greater)
        } else {
            None
        }
    }
}

impl fmt::Display for VectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, entry) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{entry}")?;
        }
        f.write_str("]")
    }
}
