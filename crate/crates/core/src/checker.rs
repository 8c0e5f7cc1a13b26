//! Executable causal-delivery checks over histories and whole executions.
//!
//! - [`check_lcd`]: local causal delivery, one history at a time, phrased
//!   with vector clocks.
//! - [`check_cd`]: causal delivery over an [`ExecutionState`], phrased with
//!   happens-before and nothing else.
//! - [`check_vc_hb_correspondence`]: `hb(m, m') ⟺ vc(m) < vc(m')` for every
//!   pair of broadcast messages.
//!
//! Happens-before is computed by [`HappensBefore`] as reachability over the
//! explicit event graph (process order plus broadcast-to-deliver edges). It
//! never looks at a vector clock, which is what makes the correspondence
//! check meaningful.
//!
//! Cost: the pairwise checks are quadratic in delivered (or broadcast)
//! messages and the closure is O(V·E/64) words. That is fine for executions
//! of a few thousand events, which is all the simulator produces.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::history::{EventId, History};
use crate::message::{Message, MessageId};
use crate::protocol::ProcessState;
use crate::vector_clock::ProcessId;

/// A message sitting in the network, addressed to `dest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight<R> {
    pub dest: ProcessId,
    pub msg: Message<R>,
}

/// Global state of an execution: every process plus the in-flight messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionState<R> {
    procs: Vec<ProcessState<R>>,
    network: Vec<InFlight<R>>,
}

impl<R: Clone> ExecutionState<R> {
    /// `n` fresh processes and an empty network.
    pub fn new(n: usize) -> Result<Self> {
        let procs = (0..n)
            .map(|i| ProcessState::new(n, ProcessId(i)))
            .collect::<Result<Vec<_>>>()?;
        if procs.is_empty() {
            return Err(Error::InvalidConfig("an execution needs at least one process".into()));
        }
        Ok(Self {
            procs,
            network: Vec::new(),
        })
    }

    pub fn from_parts(procs: Vec<ProcessState<R>>, network: Vec<InFlight<R>>) -> Result<Self> {
        let n = procs.len();
        if n == 0 {
            return Err(Error::InvalidConfig("an execution needs at least one process".into()));
        }
        for (i, p) in procs.iter().enumerate() {
            if p.id() != ProcessId(i) || p.n() != n {
                return Err(Error::InvalidConfig(format!(
                    "process at slot {i} has id {} in a cluster of {}",
                    p.id(),
                    p.n()
                )));
            }
        }
        for entry in &network {
            if entry.dest == entry.msg.sender {
                return Err(Error::InvalidConfig(format!(
                    "in-flight message {} addressed to its own sender",
                    entry.msg.id()
                )));
            }
            entry.msg.vc.check_index(entry.dest)?;
        }
        Ok(Self { procs, network })
    }

    pub fn n(&self) -> usize {
        self.procs.len()
    }

    pub fn procs(&self) -> &[ProcessState<R>] {
        &self.procs
    }

    pub fn process(&self, id: ProcessId) -> Option<&ProcessState<R>> {
        self.procs.get(id.index())
    }

    pub fn network(&self) -> &[InFlight<R>] {
        &self.network
    }

    pub(crate) fn procs_mut(&mut self) -> &mut [ProcessState<R>] {
        &mut self.procs
    }

    pub(crate) fn network_mut(&mut self) -> &mut Vec<InFlight<R>> {
        &mut self.network
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Local causal delivery.
    Lcd,
    /// Causal delivery.
    Cd,
    /// Vector clocks disagree with happens-before.
    Correspondence,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Lcd => "LCD",
            ViolationKind::Cd => "CD",
            ViolationKind::Correspondence => "correspondence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub pid: ProcessId,
    pub m1: MessageId,
    pub m2: MessageId,
    pub explanation: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violation at {} ({} / {}): {}",
            self.kind, self.pid, self.m1, self.m2, self.explanation
        )
    }
}

/// Whether `earlier` occurs in `h` strictly before `later`. False if either
/// is missing.
pub fn process_order<R>(h: &History<R>, earlier: &EventId, later: &EventId) -> bool {
    // Newest first: `later` must be met before `earlier`.
    let mut seen_later = false;
    for event in h {
        let id = event.id();
        if id == *later {
            seen_later = true;
        } else if id == *earlier {
            return seen_later;
        }
    }
    false
}

/// Delivered messages of `pid` in delivery order.
fn deliveries<R>(pid: ProcessId, h: &History<R>) -> Vec<&Message<R>> {
    h.chronological()
        .into_iter()
        .filter_map(|event| match event {
            crate::history::Event::Deliver(p, m) if *p == pid => Some(m),
            _ => None,
        })
        .collect()
}

/// Local causal delivery: whenever `vc(m1) < vc(m2)` and both were delivered
/// by `pid`, `m1` must have been delivered first.
///
/// Histories only ever grow at the newest end, so a clean result also
/// covers every earlier state of the same process.
pub fn check_lcd<R>(pid: ProcessId, h: &History<R>) -> Vec<Violation> {
    let delivered = deliveries(pid, h);
    let mut violations = Vec::new();
    for (i, first) in delivered.iter().enumerate() {
        for later in &delivered[i + 1..] {
            if later.vc.less(&first.vc).unwrap_or(false) {
                violations.push(Violation {
                    kind: ViolationKind::Lcd,
                    pid,
                    m1: later.id(),
                    m2: first.id(),
                    explanation: format!(
                        "{} with clock {} delivered after {} with clock {}",
                        later.id(),
                        later.vc,
                        first.id(),
                        first.vc
                    ),
                });
            }
        }
    }
    violations
}

/// Happens-before over all events of an execution, as a reachability table.
pub struct HappensBefore {
    index: HashMap<EventId, usize>,
    reach: Vec<Vec<u64>>,
}

impl HappensBefore {
    pub fn build<R: Clone>(x: &ExecutionState<R>) -> Self {
        let mut index = HashMap::new();
        let mut nodes = 0usize;
        let mut edges: Vec<Vec<usize>> = Vec::new();
        let mut delivers: Vec<(usize, MessageId)> = Vec::new();

        for p in x.procs() {
            let mut prev: Option<usize> = None;
            for event in p.history().chronological() {
                let node = nodes;
                nodes += 1;
                edges.push(Vec::new());
                let id = event.id();
                index.entry(id).or_insert(node);
                if let crate::history::EventKind::Deliver(_) = id.kind {
                    delivers.push((node, id.message));
                }
                if let Some(prev) = prev {
                    edges[prev].push(node);
                }
                prev = Some(node);
            }
        }
        for (node, message) in delivers {
            if let Some(&b) = index.get(&EventId::broadcast(message)) {
                edges[b].push(node);
            }
        }

        let reach = closure(&edges);
        Self { index, reach }
    }

    pub fn event_count(&self) -> usize {
        self.reach.len()
    }

    pub fn contains(&self, e: &EventId) -> bool {
        self.index.contains_key(e)
    }

    /// `e1 → e2`. Errors if either event is not in the execution.
    pub fn query(&self, e1: &EventId, e2: &EventId) -> Result<bool> {
        let a = self.node(e1)?;
        let b = self.node(e2)?;
        Ok(bit(&self.reach[a], b))
    }

    fn node(&self, e: &EventId) -> Result<usize> {
        self.index
            .get(e)
            .copied()
            .ok_or_else(|| Error::EventNotFound(e.to_string()))
    }

    pub fn is_irreflexive(&self) -> bool {
        (0..self.reach.len()).all(|v| !bit(&self.reach[v], v))
    }

    pub fn is_transitive(&self) -> bool {
        let n = self.reach.len();
        (0..n).all(|a| {
            (0..n)
                .filter(|&b| bit(&self.reach[a], b))
                .all(|b| subset(&self.reach[b], &self.reach[a]))
        })
    }
}

fn bit(set: &[u64], i: usize) -> bool {
    set[i / 64] >> (i % 64) & 1 == 1
}

fn set_bit(set: &mut [u64], i: usize) {
    set[i / 64] |= 1 << (i % 64);
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

/// Strict reachability (paths of length ≥ 1) for every node.
fn closure(edges: &[Vec<usize>]) -> Vec<Vec<u64>> {
    let n = edges.len();
    let words = n.div_ceil(64);
    let mut reach = vec![vec![0u64; words]; n];

    let mut indegree = vec![0usize; n];
    for targets in edges {
        for &t in targets {
            indegree[t] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &t in &edges[v] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                queue.push_back(t);
            }
        }
    }

    if order.len() == n {
        for &v in order.iter().rev() {
            let mut acc = vec![0u64; words];
            for &t in &edges[v] {
                set_bit(&mut acc, t);
                for (a, r) in acc.iter_mut().zip(&reach[t]) {
                    *a |= r;
                }
            }
            reach[v] = acc;
        }
    } else {
        // Cyclic graphs only arise from hand-made traces; search from every node.
        for (v, row) in reach.iter_mut().enumerate() {
            let mut stack: Vec<usize> = edges[v].clone();
            while let Some(u) = stack.pop() {
                if !bit(row, u) {
                    set_bit(row, u);
                    stack.extend(&edges[u]);
                }
            }
        }
    }
    reach
}

/// `e1 → e2` in `x`. Builds the full relation; use [`HappensBefore`]
/// directly for repeated queries.
pub fn happens_before<R: Clone>(x: &ExecutionState<R>, e1: &EventId, e2: &EventId) -> Result<bool> {
    HappensBefore::build(x).query(e1, e2)
}

/// Causal delivery: if `broadcast(m1) → broadcast(m2)` and a process
/// delivered both, it delivered `m1` first.
pub fn check_cd<R: Clone>(x: &ExecutionState<R>) -> Vec<Violation> {
    check_cd_with(x, &HappensBefore::build(x))
}

pub fn check_cd_with<R: Clone>(x: &ExecutionState<R>, hb: &HappensBefore) -> Vec<Violation> {
    let mut violations = Vec::new();
    for p in x.procs() {
        let delivered = deliveries(p.id(), p.history());
        for (i, first) in delivered.iter().enumerate() {
            let first_b = EventId::broadcast(first.id());
            for later in &delivered[i + 1..] {
                let later_b = EventId::broadcast(later.id());
                if later_b != first_b && hb.query(&later_b, &first_b).unwrap_or(false) {
                    violations.push(Violation {
                        kind: ViolationKind::Cd,
                        pid: p.id(),
                        m1: later.id(),
                        m2: first.id(),
                        explanation: format!(
                            "{} happens before {} but was delivered after it",
                            later.id(),
                            first.id()
                        ),
                    });
                }
            }
        }
    }
    violations
}

/// Broadcast messages of `x`, in process order per process.
fn broadcasts<R: Clone>(x: &ExecutionState<R>) -> Vec<&Message<R>> {
    x.procs()
        .iter()
        .flat_map(|p| {
            p.history()
                .chronological()
                .into_iter()
                .filter_map(|event| match event {
                    crate::history::Event::Broadcast(m) => Some(m),
                    _ => None,
                })
        })
        .collect()
}

/// Flags every ordered pair of broadcast messages where happens-before and
/// the vector clock order disagree.
pub fn check_vc_hb_correspondence<R: Clone>(x: &ExecutionState<R>) -> Vec<Violation> {
    check_vc_hb_correspondence_with(x, &HappensBefore::build(x))
}

pub fn check_vc_hb_correspondence_with<R: Clone>(
    x: &ExecutionState<R>,
    hb: &HappensBefore,
) -> Vec<Violation> {
    let sent = broadcasts(x);
    let mut violations = Vec::new();
    for a in &sent {
        let a_b = EventId::broadcast(a.id());
        for b in &sent {
            if a.id() == b.id() {
                continue;
            }
            let ordered = hb.query(&a_b, &EventId::broadcast(b.id())).unwrap_or(false);
            let vc_less = a.vc.less(&b.vc);
            if vc_less.as_ref().ok() != Some(&ordered) {
                violations.push(Violation {
                    kind: ViolationKind::Correspondence,
                    pid: b.sender,
                    m1: a.id(),
                    m2: b.id(),
                    explanation: match vc_less {
                        Ok(less) => format!(
                            "happens-before is {ordered} but {} < {} is {less}",
                            a.vc, b.vc
                        ),
                        Err(e) => e.to_string(),
                    },
                });
            }
        }
    }
    violations
}

/// All three checks on one execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub lcd: Vec<Violation>,
    pub cd: Vec<Violation>,
    pub correspondence: Vec<Violation>,
}

impl Report {
    pub fn total(&self) -> usize {
        self.lcd.len() + self.cd.len() + self.correspondence.len()
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &Violation> {
        self.lcd.iter().chain(&self.cd).chain(&self.correspondence)
    }
}

pub fn check_all<R: Clone>(x: &ExecutionState<R>) -> Report {
    let hb = HappensBefore::build(x);
    Report {
        lcd: x
            .procs()
            .iter()
            .flat_map(|p| check_lcd(p.id(), p.history()))
            .collect(),
        cd: check_cd_with(x, &hb),
        correspondence: check_vc_hb_correspondence_with(x, &hb),
    }
}
