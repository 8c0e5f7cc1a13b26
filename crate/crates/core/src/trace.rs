//! JSON-lines execution traces.
//!
//! One [`TraceEvent`] per line, in global occurrence order:
//!
//! ```text
//! {"kind":"broadcast","pid":0,"msg":{"vc":[1,0,0],"sender":0,"raw":1}}
//! {"kind":"deliver","pid":0,"msg":{"vc":[1,0,0],"sender":0,"raw":1}}
//! {"kind":"receive","pid":2,"msg":{"vc":[1,0,0],"sender":0,"raw":1}}
//! ```
//!
//! Receive events only rebuild delay queues. Histories contain broadcasts
//! and deliveries alone, so receipt never contributes to happens-before.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checker::ExecutionState;
use crate::error::{Error, Result};
use crate::history::{Event, EventId, History};
use crate::message::Message;
use crate::protocol::ProcessState;
use crate::vector_clock::ProcessId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Broadcast,
    Deliver,
    Receive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent<R> {
    pub kind: TraceKind,
    pub pid: ProcessId,
    pub msg: Message<R>,
}

impl<R> TraceEvent<R> {
    pub fn new(kind: TraceKind, pid: ProcessId, msg: Message<R>) -> Self {
        Self { kind, pid, msg }
    }
}

impl<R: Clone> From<&Event<R>> for TraceEvent<R> {
    fn from(event: &Event<R>) -> Self {
        match event {
            Event::Broadcast(m) => Self::new(TraceKind::Broadcast, m.sender, m.clone()),
            Event::Deliver(pid, m) => Self::new(TraceKind::Deliver, *pid, m.clone()),
        }
    }
}

pub fn write_trace<R: Serialize, W: Write>(events: &[TraceEvent<R>], mut out: W) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a trace, returning each event with its 1-based line number.
/// Blank lines are skipped.
pub fn read_trace<R: DeserializeOwned, B: BufRead>(input: B) -> Result<Vec<(usize, TraceEvent<R>)>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::MalformedTrace(format!("line {lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedTrace(format!("line {lineno}: {e}")))?;
        events.push((lineno, event));
    }
    Ok(events)
}

/// Rebuilds the execution a trace describes.
///
/// The cluster size is taken from the first message's clock; every other
/// clock must match it. An empty trace yields a single idle process.
pub fn execution_from_trace<R, I>(events: I) -> Result<ExecutionState<R>>
where
    R: Clone,
    I: IntoIterator<Item = (usize, TraceEvent<R>)>,
{
    let mut n: Option<usize> = None;
    let mut histories: Vec<Vec<Event<R>>> = Vec::new();
    let mut queues: Vec<Vec<Message<R>>> = Vec::new();
    let mut seen: HashSet<EventId> = HashSet::new();

    for (line, event) in events {
        let bad = |what: String| Error::MalformedTrace(format!("line {line}: {what}"));
        let len = event.msg.vc.len();
        let n = *n.get_or_insert_with(|| {
            histories.resize_with(len, Vec::new);
            queues.resize_with(len, Vec::new);
            len
        });
        if n == 0 || len != n {
            return Err(bad(format!("clock of length {len}, expected {n}")));
        }
        if event.pid.index() >= n || event.msg.sender.index() >= n {
            return Err(bad(format!("process id out of range for cluster of {n}")));
        }
        let pid = event.pid.index();
        let m = event.msg;
        match event.kind {
            TraceKind::Broadcast => {
                if m.sender != event.pid {
                    return Err(bad(format!("{} broadcasts a message sent by {}", event.pid, m.sender)));
                }
                if !seen.insert(EventId::broadcast(m.id())) {
                    return Err(bad(format!("message {} broadcast twice", m.id())));
                }
                histories[pid].push(Event::Broadcast(m));
            }
            TraceKind::Deliver => {
                if !seen.insert(EventId::deliver(event.pid, m.id())) {
                    return Err(bad(format!("message {} delivered twice at {}", m.id(), event.pid)));
                }
                queues[pid].retain(|q| q.id() != m.id());
                histories[pid].push(Event::Deliver(event.pid, m));
            }
            TraceKind::Receive => {
                let id = m.id();
                let done = seen.contains(&EventId::deliver(event.pid, id));
                if m.sender != event.pid && !done && !queues[pid].iter().any(|q| q.id() == id) {
                    queues[pid].push(m);
                }
            }
        }
    }

    let Some(n) = n else {
        return ExecutionState::new(1);
    };
    let procs = histories
        .into_iter()
        .zip(queues)
        .enumerate()
        .map(|(i, (events, queue))| {
            ProcessState::from_parts(n, ProcessId(i), History::from_chronological(events), queue)
        })
        .collect::<Result<Vec<_>>>()?;
    ExecutionState::from_parts(procs, Vec::new())
}
