//! The CBCAST process state machine.
//!
//! A [`ProcessState`] is an immutable value. [`receive`](ProcessState::receive),
//! [`deliver`](ProcessState::deliver) and [`broadcast`](ProcessState::broadcast)
//! each return a new state and leave the old one untouched; callers decide how
//! to sequence them. The history is a persistent list, so a transition copies
//! only the clock and the delay queue.
//!
//! Broadcast is implemented in terms of deliver: the fresh message is pushed
//! at the head of the delay queue and then delivered locally, which always
//! succeeds because ticking the sender's own entry makes the message
//! deliverable at its sender.

use crate::error::{Error, Result};
use crate::history::{hist_vc, Event, History};
use crate::message::Message;
use crate::vector_clock::{ProcessId, VectorClock};

/// Whether `m` can be delivered by a process whose clock is `now`: it is the
/// next message expected from its sender, and every other entry of its clock
/// is already covered by `now`.
pub fn deliverable<R>(m: &Message<R>, now: &VectorClock) -> Result<bool> {
    if m.vc.len() != now.len() {
        return Err(Error::LengthMismatch {
            left: m.vc.len(),
            right: now.len(),
        });
    }
    let sender = m.sender.index();
    Ok(m
        .vc
        .as_slice()
        .iter()
        .zip(now.as_slice())
        .enumerate()
        .all(|(k, (&m_k, &p_k))| {
            if k == sender {
                m_k == p_k + 1
            } else {
                m_k <= p_k
            }
        }))
}

/// Removes the first deliverable message from `queue`, keeping the relative
/// order of the others. `None` when nothing in the queue is deliverable.
pub fn dequeue<R: Clone>(
    now: &VectorClock,
    queue: &[Message<R>],
) -> Option<(Message<R>, Vec<Message<R>>)> {
    let pos = queue
        .iter()
        .position(|m| matches!(deliverable(m, now), Ok(true)))?;
    let mut rest = Vec::with_capacity(queue.len() - 1);
    rest.extend_from_slice(&queue[..pos]);
    rest.extend_from_slice(&queue[pos + 1..]);
    Some((queue[pos].clone(), rest))
}

/// Input to a single local transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op<R> {
    Receive(Message<R>),
    Broadcast(R),
    Deliver,
}

/// Per-process protocol state.
///
/// Invariant: `hist_vc(history) == vc`. Every constructor and transition
/// preserves it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessState<R> {
    vc: VectorClock,
    id: ProcessId,
    delay_queue: Vec<Message<R>>,
    history: History<R>,
}

impl<R: Clone> ProcessState<R> {
    /// Fresh process `id` in a cluster of `n`.
    pub fn new(n: usize, id: ProcessId) -> Result<Self> {
        let vc = VectorClock::new(n)?;
        vc.check_index(id)?;
        Ok(Self {
            vc,
            id,
            delay_queue: Vec::new(),
            history: History::new(),
        })
    }

    /// Rebuilds a state from an existing history and delay queue, e.g. one
    /// reconstructed from a trace. The clock is derived from the history, so
    /// the agreement invariant holds by construction.
    pub fn from_parts(
        n: usize,
        id: ProcessId,
        history: History<R>,
        delay_queue: Vec<Message<R>>,
    ) -> Result<Self> {
        let fresh = Self::new(n, id)?;
        let vc = hist_vc(&history, n)?;
        for m in &delay_queue {
            fresh.check_message(m)?;
        }
        Ok(Self {
            vc,
            delay_queue,
            history,
            ..fresh
        })
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn vc(&self) -> &VectorClock {
        &self.vc
    }

    /// Cluster size.
    pub fn n(&self) -> usize {
        self.vc.len()
    }

    /// Front of the slice is examined first.
    pub fn delay_queue(&self) -> &[Message<R>] {
        &self.delay_queue
    }

    pub fn history(&self) -> &History<R> {
        &self.history
    }

    fn check_message(&self, m: &Message<R>) -> Result<()> {
        if m.vc.len() != self.vc.len() {
            return Err(Error::LengthMismatch {
                left: m.vc.len(),
                right: self.vc.len(),
            });
        }
        self.vc.check_index(m.sender)
    }

    /// True if `m` was already delivered here or is already queued.
    fn is_duplicate(&self, m: &Message<R>) -> bool {
        let id = m.id();
        let delivered_from_sender = self.vc.get(m.sender).unwrap_or(0);
        id.seq <= delivered_from_sender || self.delay_queue.iter().any(|q| q.id() == id)
    }

    /// Puts a message from the network at the tail of the delay queue.
    ///
    /// Messages sent by this process and messages already delivered or
    /// already queued are dropped; the clock and history never change.
    pub fn receive(&self, m: Message<R>) -> Result<Self> {
        self.check_message(&m)?;
        if m.sender == self.id || self.is_duplicate(&m) {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        next.delay_queue.push(m);
        Ok(next)
    }

    /// Delivers the first deliverable message in the delay queue, if any.
    pub fn deliver(&self) -> Option<(Message<R>, Self)> {
        let (m, rest) = dequeue(&self.vc, &self.delay_queue)?;
        let vc = m
            .vc
            .combine(&self.vc)
            .expect("queued messages have the cluster's clock length");
        let next = Self {
            vc,
            id: self.id,
            delay_queue: rest,
            history: self.history.prepend(Event::Deliver(self.id, m.clone())),
        };
        Some((m, next))
    }

    /// Broadcast that reports a failed self-delivery as `None` instead of
    /// panicking. On a reachable state it always returns `Some`.
    pub fn try_broadcast(&self, raw: R) -> Option<(Message<R>, Self)> {
        let vc = self.vc.tick(self.id).ok()?;
        let m = Message::new(vc, self.id, raw);
        let mut delay_queue = Vec::with_capacity(self.delay_queue.len() + 1);
        delay_queue.push(m.clone());
        delay_queue.extend_from_slice(&self.delay_queue);
        let staged = Self {
            vc: self.vc.clone(),
            id: self.id,
            delay_queue,
            history: self.history.prepend(Event::Broadcast(m)),
        };
        staged.deliver()
    }

    /// Wraps `raw` in a message stamped with the ticked clock and delivers it
    /// locally. The caller must send the returned message to every peer.
    pub fn broadcast(&self, raw: R) -> (Message<R>, Self) {
        self.try_broadcast(raw)
            .expect("a freshly broadcast message is always deliverable at its sender")
    }

    /// Applies one operation, discarding any message it produces.
    pub fn step(&self, op: Op<R>) -> Result<Self> {
        match op {
            Op::Receive(m) => self.receive(m),
            Op::Broadcast(raw) => Ok(self.broadcast(raw).1),
            Op::Deliver => Ok(self.deliver().map_or_else(|| self.clone(), |(_, p)| p)),
        }
    }

    /// Recomputes the clock from the history and compares.
    pub fn clock_agrees_with_history(&self) -> bool {
        hist_vc(&self.history, self.n()).is_ok_and(|h| h == self.vc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::check_lcd;
    use proptest::prelude::*;

    fn msg(vc: &[u64], sender: usize) -> Message<&'static str> {
        Message::new(VectorClock::from(vc.to_vec()), ProcessId(sender), "x")
    }

    fn vc<const N: usize>(entries: [u64; N]) -> VectorClock {
        VectorClock::from(entries)
    }

    #[test]
    fn process_new() {
        let p = ProcessState::<()>::new(3, ProcessId(0)).unwrap();
        assert_eq!(p.vc(), &vc([0, 0, 0]));
        assert_eq!(p.id(), ProcessId(0));
        assert!(p.delay_queue().is_empty());
        assert!(p.history().is_empty());

        let p2 = ProcessState::<()>::new(3, ProcessId(2)).unwrap();
        assert_eq!(p2.id(), ProcessId(2));
        assert_eq!(p2.vc(), &vc([0, 0, 0]));

        assert_eq!(
            ProcessState::<()>::new(3, ProcessId(3)),
            Err(Error::IndexOutOfRange {
                id: ProcessId(3),
                len: 3
            })
        );
    }

    #[test]
    fn deliverable_examples() {
        assert!(deliverable(&msg(&[1, 0, 0], 0), &vc([0, 0, 0])).unwrap());
        assert!(!deliverable(&msg(&[2, 0, 0], 0), &vc([0, 0, 0])).unwrap());
        let glad = msg(&[2, 1, 0], 1);
        assert!(!deliverable(&glad, &vc([1, 0, 0])).unwrap());
        assert!(deliverable(&glad, &vc([2, 0, 0])).unwrap());
        assert!(deliverable(&glad, &vc([1, 0])).is_err());
    }

    #[test]
    fn dequeue_examples() {
        assert!(dequeue::<()>(&vc([0, 0, 0]), &[]).is_none());

        let m1 = msg(&[1, 0, 0], 0);
        let m2 = msg(&[2, 0, 0], 0);
        let now = vc([0, 0, 0]);
        assert!(!deliverable(&m2, &now).unwrap());
        assert!(deliverable(&m1, &now).unwrap());
        assert_eq!(
            dequeue(&now, &[m2.clone(), m1.clone()]),
            Some((m1, vec![m2.clone()]))
        );

        assert_eq!(dequeue(&vc([1, 0, 0]), std::slice::from_ref(&m2)), Some((m2, vec![])));
    }

    #[test]
    fn dequeue_picks_first_deliverable_and_keeps_order() {
        let now = vc([1, 0, 0]);
        let a = msg(&[3, 0, 0], 0);
        let b = msg(&[1, 1, 0], 1);
        let c = msg(&[0, 0, 1], 2);
        let d = msg(&[0, 0, 2], 2);
        let (m, rest) = dequeue(&now, &[a.clone(), d.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(m, b);
        assert_eq!(rest, vec![a, d, c]);
    }

    #[test]
    fn receive_enqueues_at_tail() {
        let p = ProcessState::new(3, ProcessId(0)).unwrap();
        let a = msg(&[0, 1, 0], 1);
        let b = msg(&[0, 0, 1], 2);
        let p = p.receive(a.clone()).unwrap().receive(b.clone()).unwrap();
        assert_eq!(p.delay_queue(), &[a, b]);
        assert_eq!(p.vc(), &vc([0, 0, 0]));
        assert!(p.history().is_empty());
    }

    #[test]
    fn receive_discards_self_sent() {
        let p = ProcessState::new(3, ProcessId(0)).unwrap();
        assert_eq!(p.receive(msg(&[1, 0, 0], 0)).unwrap(), p);
    }

    #[test]
    fn receive_is_idempotent() {
        let p = ProcessState::new(3, ProcessId(0)).unwrap();
        let m = msg(&[0, 2, 0], 1);
        let once = p.receive(m.clone()).unwrap();
        assert_eq!(once.receive(m.clone()).unwrap(), once);

        // Already delivered: also dropped.
        let m1 = msg(&[0, 1, 0], 1);
        let (_, delivered) = p.receive(m1.clone()).unwrap().deliver().unwrap();
        assert_eq!(delivered.receive(m1).unwrap(), delivered);
    }

    #[test]
    fn receive_rejects_bad_clock_length() {
        let p = ProcessState::new(3, ProcessId(0)).unwrap();
        assert_eq!(
            p.receive(msg(&[1, 0], 1)),
            Err(Error::LengthMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn deliver_examples() {
        let bob = ProcessState::new(3, ProcessId(1)).unwrap();
        let lost = msg(&[1, 0, 0], 0);
        let (m, bob2) = bob.receive(lost.clone()).unwrap().deliver().unwrap();
        assert_eq!(m, lost);
        assert_eq!(bob2.vc(), &vc([1, 0, 0]));
        assert!(bob2.delay_queue().is_empty());
        assert_eq!(
            bob2.history().latest(),
            Some(&Event::Deliver(ProcessId(1), lost))
        );

        let carol = ProcessState::new(3, ProcessId(2)).unwrap();
        let found = msg(&[2, 0, 0], 0);
        assert!(carol.receive(found).unwrap().deliver().is_none());

        assert!(carol.deliver().is_none());
    }

    #[test]
    fn broadcast_examples() {
        let alice = ProcessState::new(3, ProcessId(0)).unwrap();
        let (m1, alice) = alice.broadcast("lost");
        assert_eq!(m1.vc, vc([1, 0, 0]));
        assert_eq!(alice.vc(), &vc([1, 0, 0]));
        let (m2, _) = alice.broadcast("found");
        assert_eq!(m2.vc, vc([2, 0, 0]));

        // Bob after delivering both of Alice's messages.
        let bob = ProcessState::new(3, ProcessId(1)).unwrap();
        let (_, bob) = bob.receive(m1).unwrap().deliver().unwrap();
        let (_, bob) = bob.receive(m2).unwrap().deliver().unwrap();
        assert_eq!(bob.vc(), &vc([2, 0, 0]));
        let (glad, _) = bob.broadcast("glad");
        assert_eq!(glad.vc, vc([2, 1, 0]));
        assert_eq!(glad.sender, ProcessId(1));
    }

    #[test]
    fn broadcast_records_both_events_and_restores_queue() {
        let p = ProcessState::new(3, ProcessId(0)).unwrap();
        let waiting = msg(&[0, 2, 0], 1);
        let p = p.receive(waiting.clone()).unwrap();
        let (m, p2) = p.broadcast("hello");
        assert_eq!(p2.delay_queue(), &[waiting]);
        assert_eq!(p2.vc(), &p.vc().tick(ProcessId(0)).unwrap());
        let newest: Vec<_> = p2.history().iter().take(2).cloned().collect();
        assert_eq!(
            newest,
            vec![Event::Deliver(ProcessId(0), m.clone()), Event::Broadcast(m)]
        );
        assert_eq!(p2.history().len(), p.history().len() + 2);
    }

    #[test]
    fn step_dispatches() {
        let p = ProcessState::new(3, ProcessId(0)).unwrap();
        assert_eq!(p.step(Op::Deliver).unwrap(), p);
        let m = msg(&[0, 1, 0], 1);
        assert_eq!(p.step(Op::Receive(m.clone())).unwrap(), p.receive(m).unwrap());
        assert_eq!(p.step(Op::Broadcast("r")).unwrap(), p.broadcast("r").1);
    }

    #[test]
    fn from_parts_derives_clock() {
        let m = msg(&[0, 1, 0], 1);
        let h = History::from_chronological([Event::Deliver(ProcessId(0), m)]);
        let p = ProcessState::from_parts(3, ProcessId(0), h, vec![]).unwrap();
        assert_eq!(p.vc(), &vc([0, 1, 0]));
        assert!(p.clock_agrees_with_history());
    }

    /// Actions of a tiny in-test cluster driver: (kind, process, network pick).
    fn actions() -> impl Strategy<Value = Vec<(u8, usize, usize)>> {
        prop::collection::vec((0u8..3, 0usize..8, 0usize..64), 0..120)
    }

    proptest! {
        #[test]
        fn transitions_preserve_invariants(n in 1usize..5, script in actions()) {
            let mut procs: Vec<ProcessState<u32>> = (0..n)
                .map(|i| ProcessState::new(n, ProcessId(i)).unwrap())
                .collect();
            let mut network: Vec<(usize, Message<u32>)> = Vec::new();
            let mut payload = 0u32;

            for (kind, who, pick) in script {
                let pid = who % n;
                let before = procs[pid].clone();
                match kind {
                    0 => {
                        payload += 1;
                        let (m, next) = before.try_broadcast(payload)
                            .expect("self-delivery must succeed");
                        prop_assert_eq!(next.vc(), &before.vc().tick(ProcessId(pid)).unwrap());
                        prop_assert_eq!(next.delay_queue(), before.delay_queue());
                        for dest in (0..n).filter(|d| *d != pid) {
                            network.push((dest, m.clone()));
                        }
                        procs[pid] = next;
                    }
                    1 if !network.is_empty() => {
                        let (dest, m) = network.remove(pick % network.len());
                        let next = procs[dest].receive(m).unwrap();
                        prop_assert_eq!(next.vc(), procs[dest].vc());
                        prop_assert_eq!(next.history(), procs[dest].history());
                        procs[dest] = next;
                    }
                    _ => {
                        if let Some((m, next)) = before.deliver() {
                            prop_assert!(before.vc().less_equal(next.vc()).unwrap());
                            prop_assert_eq!(
                                next.vc().get(m.sender).unwrap(),
                                before.vc().get(m.sender).unwrap() + 1
                            );
                            let mut expected: Vec<_> = before.delay_queue().to_vec();
                            let at = expected.iter().position(|q| q == &m).unwrap();
                            expected.remove(at);
                            prop_assert_eq!(next.delay_queue(), expected.as_slice());
                            procs[pid] = next;
                        }
                    }
                }
                for p in &procs {
                    prop_assert!(p.clock_agrees_with_history());
                    prop_assert!(check_lcd(p.id(), p.history()).is_empty());
                }
            }
        }
    }
}
