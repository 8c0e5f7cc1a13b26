//! Seeded, single-threaded executor for whole-cluster runs.
//!
//! Each step picks one enabled action with a weighted draw: a broadcast at a
//! random process (fanned out to every other process through an adversarial
//! network that may drop or duplicate each copy), the receipt of a random
//! in-flight message, or a delivery attempt at a process with a non-empty
//! delay queue. Every observable transition is appended to a trace in the
//! checker's JSON-lines format.
//!
//! Runs are reproducible: the only source of randomness is a
//! [`PRNG_ALGORITHM`] stream seeded from [`SimConfig::seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checker::{ExecutionState, InFlight, Report};
use crate::error::{Error, Result};
use crate::message::MessageId;
use crate::protocol::deliverable;
use crate::trace::{TraceEvent, TraceKind};
use crate::vector_clock::ProcessId;

/// Name of the generator behind every simulation, reported in summaries.
pub const PRNG_ALGORITHM: &str = "ChaCha8Rng";

/// Payload of simulated broadcasts: a per-run sequence number.
pub type Payload = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_procs: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub p_drop: f64,
    pub p_duplicate: f64,
    pub broadcast_weight: f64,
    pub receive_weight: f64,
    pub deliver_weight: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_procs: 3,
            seed: 0,
            max_steps: 1000,
            p_drop: 0.0,
            p_duplicate: 0.0,
            broadcast_weight: 1.0,
            receive_weight: 2.0,
            deliver_weight: 2.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_procs == 0 {
            return bad("n_procs must be at least 1".into());
        }
        for (name, p) in [("p_drop", self.p_drop), ("p_duplicate", self.p_duplicate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        let weights = [self.broadcast_weight, self.receive_weight, self.deliver_weight];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("scheduling weights must be finite and non-negative".into());
        }
        if weights.iter().all(|w| *w == 0.0) {
            return bad("at least one scheduling weight must be positive".into());
        }
        Ok(())
    }
}

/// An action the scheduler can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Broadcast(ProcessId),
    /// Receive the in-flight entry at this index of [`ExecutionState::network`].
    Receive(usize),
    Deliver(ProcessId),
}

/// What one step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepRecord {
    Broadcast {
        pid: ProcessId,
        msg: MessageId,
        sent: usize,
        dropped: usize,
        duplicated: usize,
    },
    Receive {
        pid: ProcessId,
        msg: MessageId,
        /// False when the process discarded it as a duplicate.
        queued: bool,
    },
    Deliver {
        pid: ProcessId,
        msg: MessageId,
    },
    /// A delivery attempt found nothing deliverable.
    DeliverNoop {
        pid: ProcessId,
    },
    /// Nothing is enabled.
    Quiescent,
    /// The step budget is spent.
    Exhausted,
}

impl StepRecord {
    /// The process whose state the step changed or inspected.
    pub fn pid(&self) -> Option<ProcessId> {
        match self {
            StepRecord::Broadcast { pid, .. }
            | StepRecord::Receive { pid, .. }
            | StepRecord::Deliver { pid, .. }
            | StepRecord::DeliverNoop { pid } => Some(*pid),
            StepRecord::Quiescent | StepRecord::Exhausted => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, StepRecord::Quiescent | StepRecord::Exhausted)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub steps: usize,
    pub broadcasts: usize,
    /// Deliveries of messages received from the network.
    pub delivered: usize,
    pub dropped: usize,
    pub duplicated: usize,
    pub max_dq_len: usize,
    dq_len_after_delivery_sum: u64,
}

impl SimStats {
    /// Mean delay-queue length observed right after each delivery.
    pub fn mean_dq_len_after_delivery(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.dq_len_after_delivery_sum as f64 / self.delivered as f64
        }
    }
}

/// Run summary in the CLI's output shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub prng: &'static str,
    pub n_procs: usize,
    pub seed: u64,
    pub steps: usize,
    pub broadcasts: usize,
    pub delivered: usize,
    pub dropped: usize,
    pub duplicated: usize,
    pub max_dq_len: usize,
    pub mean_dq_len_after_delivery: f64,
    pub in_flight: usize,
    pub queued: usize,
    pub violations: usize,
}

pub struct Simulation {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    exec: ExecutionState<Payload>,
    trace: Vec<TraceEvent<Payload>>,
    stats: SimStats,
    next_payload: Payload,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            exec: ExecutionState::new(cfg.n_procs)?,
            trace: Vec::new(),
            stats: SimStats::default(),
            next_payload: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn execution(&self) -> &ExecutionState<Payload> {
        &self.exec
    }

    pub fn trace(&self) -> &[TraceEvent<Payload>] {
        &self.trace
    }

    /// Trace events paired with 1-based positions, as
    /// [`execution_from_trace`](crate::trace::execution_from_trace) expects.
    pub fn numbered_trace(&self) -> impl Iterator<Item = (usize, TraceEvent<Payload>)> + '_ {
        self.trace.iter().cloned().enumerate().map(|(i, e)| (i + 1, e))
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn summary(&self, report: &Report) -> Summary {
        Summary {
            prng: PRNG_ALGORITHM,
            n_procs: self.cfg.n_procs,
            seed: self.cfg.seed,
            steps: self.stats.steps,
            broadcasts: self.stats.broadcasts,
            delivered: self.stats.delivered,
            dropped: self.stats.dropped,
            duplicated: self.stats.duplicated,
            max_dq_len: self.stats.max_dq_len,
            mean_dq_len_after_delivery: self.stats.mean_dq_len_after_delivery(),
            in_flight: self.exec.network().len(),
            queued: self.queued(),
            violations: report.total(),
        }
    }

    /// Messages sitting in delay queues across the cluster.
    pub fn queued(&self) -> usize {
        self.exec.procs().iter().map(|p| p.delay_queue().len()).sum()
    }

    fn random_pid(&mut self, among: &[ProcessId]) -> ProcessId {
        among[self.rng.random_range(0..among.len())]
    }

    fn has_deliverable(&self, pid: ProcessId) -> bool {
        let p = &self.exec.procs()[pid.index()];
        p.delay_queue()
            .iter()
            .any(|m| matches!(deliverable(m, p.vc()), Ok(true)))
    }

    /// Weighted pick among the enabled `(weight, category)` options.
    fn pick<T: Copy>(&mut self, options: &[(f64, T)]) -> Option<T> {
        let total: f64 = options.iter().map(|(w, _)| w).sum();
        if total <= 0.0 {
            return None;
        }
        let mut r = self.rng.random::<f64>() * total;
        for &(w, choice) in options {
            if r < w {
                return Some(choice);
            }
            r -= w;
        }
        options.iter().rev().find(|(w, _)| *w > 0.0).map(|(_, c)| *c)
    }

    /// Takes one scheduler step.
    pub fn x_step(&mut self) -> StepRecord {
        if self.stats.steps >= self.cfg.max_steps {
            return StepRecord::Exhausted;
        }
        #[derive(Clone, Copy)]
        enum Category {
            Broadcast,
            Receive,
            Deliver,
        }
        let all: Vec<ProcessId> = (0..self.exec.n()).map(ProcessId).collect();
        let waiting: Vec<ProcessId> = all
            .iter()
            .copied()
            .filter(|pid| !self.exec.procs()[pid.index()].delay_queue().is_empty())
            .collect();

        let mut options = vec![(self.cfg.broadcast_weight, Category::Broadcast)];
        if !self.exec.network().is_empty() {
            options.push((self.cfg.receive_weight, Category::Receive));
        }
        if !waiting.is_empty() {
            options.push((self.cfg.deliver_weight, Category::Deliver));
        }
        let action = match self.pick(&options) {
            None => return StepRecord::Quiescent,
            Some(Category::Broadcast) => Action::Broadcast(self.random_pid(&all)),
            Some(Category::Receive) => {
                Action::Receive(self.rng.random_range(0..self.exec.network().len()))
            }
            Some(Category::Deliver) => Action::Deliver(self.random_pid(&waiting)),
        };
        self.apply(action)
            .expect("scheduler only picks enabled actions")
    }

    /// Performs a specific action. Counts against the step budget like a
    /// scheduled step.
    pub fn apply(&mut self, action: Action) -> Result<StepRecord> {
        let n = self.exec.n();
        let record = match action {
            Action::Broadcast(pid) => {
                let proc = self.exec.procs().get(pid.index()).ok_or(Error::IndexOutOfRange { id: pid, len: n })?;
                let payload = self.next_payload;
                self.next_payload += 1;
                let (m, next) = proc.broadcast(payload);
                self.exec.procs_mut()[pid.index()] = next;
                self.trace.push(TraceEvent::new(TraceKind::Broadcast, pid, m.clone()));
                self.trace.push(TraceEvent::new(TraceKind::Deliver, pid, m.clone()));
                self.stats.broadcasts += 1;

                let (mut sent, mut dropped, mut duplicated) = (0, 0, 0);
                for dest in (0..n).map(ProcessId).filter(|d| *d != pid) {
                    if self.rng.random_bool(self.cfg.p_drop) {
                        dropped += 1;
                        continue;
                    }
                    let copies = if self.rng.random_bool(self.cfg.p_duplicate) {
                        duplicated += 1;
                        2
                    } else {
                        1
                    };
                    for _ in 0..copies {
                        self.exec.network_mut().push(InFlight {
                            dest,
                            msg: m.clone(),
                        });
                        sent += 1;
                    }
                }
                self.stats.dropped += dropped;
                self.stats.duplicated += duplicated;
                StepRecord::Broadcast {
                    pid,
                    msg: m.id(),
                    sent,
                    dropped,
                    duplicated,
                }
            }
            Action::Receive(index) => {
                if index >= self.exec.network().len() {
                    return Err(Error::InvalidConfig(format!("no in-flight message at index {index}")));
                }
                let InFlight { dest, msg } = self.exec.network_mut().swap_remove(index);
                let proc = &self.exec.procs()[dest.index()];
                let before = proc.delay_queue().len();
                let next = proc.receive(msg.clone())?;
                let queued = next.delay_queue().len() > before;
                self.exec.procs_mut()[dest.index()] = next;
                let id = msg.id();
                self.trace.push(TraceEvent::new(TraceKind::Receive, dest, msg));
                StepRecord::Receive {
                    pid: dest,
                    msg: id,
                    queued,
                }
            }
            Action::Deliver(pid) => {
                let proc = self.exec.procs().get(pid.index()).ok_or(Error::IndexOutOfRange { id: pid, len: n })?;
                match proc.deliver() {
                    Some((m, next)) => {
                        let remaining = next.delay_queue().len();
                        self.exec.procs_mut()[pid.index()] = next;
                        self.stats.delivered += 1;
                        self.stats.dq_len_after_delivery_sum += remaining as u64;
                        let id = m.id();
                        self.trace.push(TraceEvent::new(TraceKind::Deliver, pid, m));
                        StepRecord::Deliver { pid, msg: id }
                    }
                    None => StepRecord::DeliverNoop { pid },
                }
            }
        };
        if let Some(pid) = record.pid() {
            let len = self.exec.procs()[pid.index()].delay_queue().len();
            self.stats.max_dq_len = self.stats.max_dq_len.max(len);
        }
        self.stats.steps += 1;
        Ok(record)
    }

    /// Steps until the budget is spent or nothing is enabled.
    pub fn run(&mut self) -> usize {
        self.run_observed(|_, _| {})
    }

    /// Like [`run`](Self::run), calling `observe` after every step.
    pub fn run_observed(&mut self, mut observe: impl FnMut(&Self, &StepRecord)) -> usize {
        let mut taken = 0;
        loop {
            let record = self.x_step();
            if record.is_terminal() {
                return taken;
            }
            taken += 1;
            observe(self, &record);
        }
    }

    /// Stops broadcasting and alternates receipts and deliveries until the
    /// network is empty and no process can deliver anything. Returns the
    /// number of messages delivered meanwhile. Drain steps do not count
    /// against the step budget.
    ///
    /// Over a loss-free network this empties every delay queue. With drops,
    /// messages whose causal predecessors were lost stay queued.
    pub fn drain(&mut self) -> Result<usize> {
        self.drain_observed(|_, _| {})
    }

    pub fn drain_observed(&mut self, mut observe: impl FnMut(&Self, &StepRecord)) -> Result<usize> {
        #[derive(Clone, Copy)]
        enum Category {
            Receive,
            Deliver,
        }
        let saved_budget = self.cfg.max_steps;
        self.cfg.max_steps = usize::MAX;
        let mut delivered = 0;
        let mut idle = 0usize;
        let result = loop {
            let ready: Vec<ProcessId> = (0..self.exec.n())
                .map(ProcessId)
                .filter(|pid| self.has_deliverable(*pid))
                .collect();
            let mut options = Vec::with_capacity(2);
            if !self.exec.network().is_empty() {
                options.push((1.0, Category::Receive));
            }
            if !ready.is_empty() {
                options.push((1.0, Category::Deliver));
            }
            let action = match self.pick(&options) {
                None => break Ok(delivered),
                Some(Category::Receive) => {
                    Action::Receive(self.rng.random_range(0..self.exec.network().len()))
                }
                Some(Category::Deliver) => Action::Deliver(self.random_pid(&ready)),
            };
            let record = match self.apply(action) {
                Ok(record) => record,
                Err(e) => break Err(e),
            };
            let progressed = matches!(record, StepRecord::Receive { .. } | StepRecord::Deliver { .. });
            if let StepRecord::Deliver { .. } = record {
                delivered += 1;
            }
            observe(self, &record);
            idle = if progressed { 0 } else { idle + 1 };
            let limit = self.exec.n() * self.exec.network().len() + self.queued();
            if idle > limit {
                break Err(Error::Stalled(format!(
                    "{idle} steps without progress; {} in flight, {} queued",
                    self.exec.network().len(),
                    self.queued()
                )));
            }
        };
        self.cfg.max_steps = saved_budget;
        result
    }
}
