//! Scripted replays of the three-process example executions: a plain
//! vector-clock run and the two lost-wallet chat scenarios.
//!
//! Processes 0, 1 and 2 play Alice, Bob and Carol. Each receipt is followed
//! by delivering everything that has become deliverable, so a message that
//! is still queued right after its receipt was buffered.

use serde::Serialize;

use crate::checker::ExecutionState;
use crate::message::Message;
use crate::vector_clock::{ProcessId, VectorClock};

pub const ALICE: ProcessId = ProcessId(0);
pub const BOB: ProcessId = ProcessId(1);
pub const CAROL: ProcessId = ProcessId(2);

type Raw = &'static str;

#[derive(Debug, Clone, Serialize)]
pub struct Buffered {
    pub pid: ProcessId,
    pub message: Raw,
    /// Message whose delivery released it.
    pub released_by: Raw,
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub execution: ExecutionState<Raw>,
    /// Broadcast messages in broadcast order.
    pub messages: Vec<Message<Raw>>,
    pub buffered: Vec<Buffered>,
}

impl Replay {
    pub fn message(&self, raw: &str) -> &Message<Raw> {
        self.messages
            .iter()
            .find(|m| m.raw == raw)
            .unwrap_or_else(|| panic!("no message {raw:?} in replay"))
    }

    pub fn clock(&self, pid: ProcessId) -> &VectorClock {
        self.execution.procs()[pid.index()].vc()
    }

    /// Payloads delivered at `pid`, in delivery order.
    pub fn delivered(&self, pid: ProcessId) -> Vec<Raw> {
        self.execution.procs()[pid.index()]
            .history()
            .delivered()
            .map(|m| m.raw)
            .collect()
    }

    pub fn was_buffered(&self, pid: ProcessId, raw: &str) -> bool {
        self.buffered.iter().any(|b| b.pid == pid && b.message == raw)
    }
}

#[derive(Debug, Clone)]
pub struct Figures {
    /// p0 sends m1; p1 delivers it and sends m2; p2 independently sends m3.
    pub vector_clocks: Replay,
    /// Carol receives "found" before "lost" and buffers it.
    pub fifo: Replay,
    /// Carol receives Bob's reply before Alice's "found" and buffers it.
    pub causal: Replay,
}

struct Script {
    x: ExecutionState<Raw>,
    messages: Vec<Message<Raw>>,
    buffered: Vec<Buffered>,
    pending: Vec<(ProcessId, Raw)>,
}

impl Script {
    fn new() -> Self {
        Self {
            x: ExecutionState::new(3).expect("three processes"),
            messages: Vec::new(),
            buffered: Vec::new(),
            pending: Vec::new(),
        }
    }

    fn broadcast(&mut self, pid: ProcessId, raw: Raw) -> Message<Raw> {
        let (m, next) = self.x.procs()[pid.index()].broadcast(raw);
        self.x.procs_mut()[pid.index()] = next;
        self.messages.push(m.clone());
        m
    }

    fn receive(&mut self, pid: ProcessId, m: &Message<Raw>) {
        let i = pid.index();
        self.x.procs_mut()[i] = self.x.procs()[i]
            .receive(m.clone())
            .expect("scripted messages fit the cluster");
        while let Some((delivered, next)) = self.x.procs()[i].deliver() {
            self.x.procs_mut()[i] = next;
            let (released, still): (Vec<_>, Vec<_>) = self
                .pending
                .drain(..)
                .partition(|(p, raw)| *p == pid && *raw == delivered.raw);
            self.pending = still;
            for (_, raw) in released {
                let by = self.messages_delivered_before(pid, raw);
                self.buffered.push(Buffered {
                    pid,
                    message: raw,
                    released_by: by,
                });
            }
        }
        if self.x.procs()[i].delay_queue().iter().any(|q| q.id() == m.id()) {
            self.pending.push((pid, m.raw));
        }
    }

    /// The delivery immediately preceding `raw`'s at `pid`.
    fn messages_delivered_before(&self, pid: ProcessId, raw: Raw) -> Raw {
        let delivered: Vec<Raw> = self.x.procs()[pid.index()]
            .history()
            .delivered()
            .map(|m| m.raw)
            .collect();
        let at = delivered.iter().position(|r| *r == raw).expect("just delivered");
        delivered[at.saturating_sub(1)]
    }

    fn finish(self) -> Replay {
        assert!(self.pending.is_empty(), "scripted replay left messages queued");
        Replay {
            execution: self.x,
            messages: self.messages,
            buffered: self.buffered,
        }
    }
}

fn vector_clocks() -> Replay {
    let mut s = Script::new();
    let m1 = s.broadcast(ALICE, "m1");
    s.receive(BOB, &m1);
    let m2 = s.broadcast(BOB, "m2");
    let m3 = s.broadcast(CAROL, "m3");
    s.receive(CAROL, &m2);
    s.receive(CAROL, &m1);
    s.receive(ALICE, &m2);
    s.receive(ALICE, &m3);
    s.receive(BOB, &m3);
    s.finish()
}

fn fifo() -> Replay {
    let mut s = Script::new();
    let lost = s.broadcast(ALICE, "lost");
    let found = s.broadcast(ALICE, "found");
    s.receive(BOB, &lost);
    s.receive(BOB, &found);
    s.receive(CAROL, &found);
    s.receive(CAROL, &lost);
    s.finish()
}

fn causal() -> Replay {
    let mut s = Script::new();
    let lost = s.broadcast(ALICE, "lost");
    let found = s.broadcast(ALICE, "found");
    s.receive(BOB, &lost);
    s.receive(CAROL, &lost);
    s.receive(BOB, &found);
    let glad = s.broadcast(BOB, "glad");
    s.receive(CAROL, &glad);
    s.receive(CAROL, &found);
    s.receive(ALICE, &glad);
    s.finish()
}

pub fn replay_figures() -> Figures {
    Figures {
        vector_clocks: vector_clocks(),
        fifo: fifo(),
        causal: causal(),
    }
}
