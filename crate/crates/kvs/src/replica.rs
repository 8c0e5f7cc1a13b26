use cbcast::{Message, ProcessId, ProcessState, VectorClock};
use serde::Serialize;
use serde_json::Value;

use crate::error::KvError;
use crate::store::{KvCommand, Store};

/// Delivery counters, served by `GET /metrics`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Running mean of the delay-queue length right after each delivery of
    /// a peer message.
    pub mean_dq_after_delivery: f64,
    pub delivered_count: u64,
    pub queued_count: usize,
}

/// One node's protocol state plus the store its deliveries build.
///
/// Synchronous and single-owner; [`crate::node::Node`] wraps it in a lock.
/// Every method that changes the protocol state also applies the affected
/// command to the store before returning, so the store always reflects the
/// history's delivery order.
#[derive(Debug, Clone)]
pub struct Replica {
    process: ProcessState<KvCommand>,
    store: Store,
    delivered: u64,
    dq_len_sum: u64,
}

impl Replica {
    pub fn new(n: usize, id: ProcessId) -> Result<Self, KvError> {
        Ok(Self {
            process: ProcessState::new(n, id)?,
            store: Store::new(),
            delivered: 0,
            dq_len_sum: 0,
        })
    }

    pub fn id(&self) -> ProcessId {
        self.process.id()
    }

    pub fn process(&self) -> &ProcessState<KvCommand> {
        &self.process
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn vc(&self) -> &VectorClock {
        self.process.vc()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.store.get(key)
    }

    /// Broadcasts a client write and applies it locally. The returned
    /// message must be sent to every peer.
    pub fn write(&mut self, cmd: KvCommand) -> Result<Message<KvCommand>, KvError> {
        if cmd.key().is_empty() {
            return Err(KvError::EmptyKey);
        }
        let (m, next) = self.process.broadcast(cmd);
        self.process = next;
        self.store.apply(&m);
        Ok(m)
    }

    /// Checks a peer message without touching any state.
    pub fn validate(&self, m: &Message<KvCommand>) -> Result<(), KvError> {
        if m.vc.len() != self.process.n() {
            return Err(KvError::ClockLength {
                expected: self.process.n(),
                got: m.vc.len(),
            });
        }
        if m.sender.index() >= self.process.n() {
            return Err(KvError::UnknownSender(m.sender));
        }
        if m.raw.key().is_empty() {
            return Err(KvError::EmptyKey);
        }
        Ok(())
    }

    /// Queues a peer message. Duplicates and self-sent messages are ignored.
    pub fn receive(&mut self, m: Message<KvCommand>) -> Result<(), KvError> {
        self.validate(&m)?;
        self.process = self.process.receive(m)?;
        Ok(())
    }

    /// Delivers one queued message, if any is deliverable, and applies it.
    pub fn deliver_one(&mut self) -> Option<Message<KvCommand>> {
        let (m, next) = self.process.deliver()?;
        self.process = next;
        self.store.apply(&m);
        self.delivered += 1;
        self.dq_len_sum += self.process.delay_queue().len() as u64;
        Some(m)
    }

    /// Delivers until nothing more is deliverable. Returns how many.
    pub fn deliver_ready(&mut self) -> usize {
        std::iter::from_fn(|| self.deliver_one()).count()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            mean_dq_after_delivery: if self.delivered == 0 {
                0.0
            } else {
                self.dq_len_sum as f64 / self.delivered as f64
            },
            delivered_count: self.delivered,
            queued_count: self.process.delay_queue().len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn put(key: &str, value: Value) -> KvCommand {
        KvCommand::Put {
            key: key.into(),
            value,
        }
    }

    #[test]
    fn local_write_on_fresh_node() {
        let mut r = Replica::new(3, ProcessId(0)).unwrap();
        let m = r.write(put("a", json!(1))).unwrap();
        assert_eq!(m.vc, VectorClock::from([1, 0, 0]));
        assert_eq!(r.get("a"), Some(&json!(1)));
        r.write(KvCommand::Delete { key: "a".into() }).unwrap();
        assert_eq!(r.get("a"), None);
        assert_eq!(r.get("missing"), None);
        assert!(matches!(r.write(put("", json!(0))), Err(KvError::EmptyKey)));
    }

    #[test]
    fn message_from_the_future_waits_for_its_dependency() {
        let mut a = Replica::new(3, ProcessId(0)).unwrap();
        let mut c = Replica::new(3, ProcessId(2)).unwrap();
        let first = a.write(put("k", json!(1))).unwrap();
        let second = a.write(put("k", json!(2))).unwrap();

        c.receive(second.clone()).unwrap();
        assert_eq!(c.deliver_ready(), 0);
        assert_eq!(c.get("k"), None);
        assert_eq!(c.metrics().queued_count, 1);

        c.receive(first).unwrap();
        assert_eq!(c.deliver_ready(), 2);
        assert_eq!(c.get("k"), Some(&json!(2)));

        // Re-sending is harmless.
        c.receive(second).unwrap();
        assert_eq!(c.deliver_ready(), 0);
        let metrics = c.metrics();
        assert_eq!(metrics.delivered_count, 2);
        assert_eq!(metrics.queued_count, 0);
        // Queue lengths after the two deliveries were 1 and 0.
        assert_eq!(metrics.mean_dq_after_delivery, 0.5);
    }

    #[test]
    fn rejects_wrong_clock_length() {
        let mut r = Replica::new(3, ProcessId(0)).unwrap();
        let m = Message::new(VectorClock::from([1, 0]), ProcessId(1), put("k", json!(1)));
        assert!(matches!(
            r.receive(m),
            Err(KvError::ClockLength { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn store_equals_replay_of_delivery_order() {
        let mut a = Replica::new(2, ProcessId(0)).unwrap();
        let mut b = Replica::new(2, ProcessId(1)).unwrap();
        let m1 = a.write(put("x", json!(1))).unwrap();
        let m2 = b.write(put("x", json!(2))).unwrap();
        let m3 = b.write(KvCommand::Delete { key: "y".into() }).unwrap();
        a.receive(m2).unwrap();
        a.receive(m3).unwrap();
        a.deliver_ready();
        b.receive(m1).unwrap();
        b.deliver_ready();

        for r in [&a, &b] {
            let replayed = r
                .process()
                .history()
                .delivered()
                .fold(Store::new(), crate::store::apply_command);
            assert_eq!(&replayed, r.store());
        }
        assert_eq!(a.store().canonical_json(), b.store().canonical_json());
    }
}
