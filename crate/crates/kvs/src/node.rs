//! A running store node: the locked replica, the background delivery task,
//! and one outbound sender per peer.
//!
//! Every protocol transition happens together with its store update inside
//! one critical section on the replica lock. Network I/O never happens while
//! the lock is held.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, Weak};
use std::time::Duration;

use cbcast::{Message, ProcessId, VectorClock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{mpsc, Notify};
use tracing::{debug, warn};

use crate::config::NodeConfig;
use crate::error::KvError;
use crate::replica::{Metrics, Replica};
use crate::store::{KvCommand, Store};

/// Body of `POST /internal/messages`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageBatch {
    pub msgs: Vec<Message<KvCommand>>,
}

const SEND_ATTEMPTS: u32 = 10;
const FIRST_BACKOFF: Duration = Duration::from_millis(50);
const MAX_BACKOFF: Duration = Duration::from_secs(2);

struct Inner {
    id: ProcessId,
    replica: Mutex<Replica>,
    wake: Arc<Notify>,
    outboxes: Vec<mpsc::UnboundedSender<Message<KvCommand>>>,
    ready: AtomicBool,
}

#[derive(Clone)]
pub struct Node {
    inner: Arc<Inner>,
}

impl Node {
    /// Starts the delivery task and the peer senders on the current Tokio
    /// runtime.
    pub fn start(cfg: &NodeConfig) -> Result<Self, KvError> {
        cfg.validate()?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| KvError::Config(format!("http client: {e}")))?;

        let mut outboxes = Vec::with_capacity(cfg.peers.len());
        for peer in &cfg.peers {
            let (tx, rx) = mpsc::unbounded_channel();
            outboxes.push(tx);
            let url = format!("{}/internal/messages", peer.url.trim_end_matches('/'));
            tokio::spawn(peer_sender(client.clone(), url, rx, cfg.batch_max));
        }

        let wake = Arc::new(Notify::new());
        let inner = Arc::new(Inner {
            id: cfg.self_id,
            replica: Mutex::new(Replica::new(cfg.n(), cfg.self_id)?),
            wake: wake.clone(),
            outboxes,
            ready: AtomicBool::new(true),
        });
        tokio::spawn(drain_loop(Arc::downgrade(&inner), wake));
        Ok(Self { inner })
    }

    pub fn id(&self) -> ProcessId {
        self.inner.id
    }

    pub fn is_ready(&self) -> bool {
        self.inner.ready.load(Ordering::Acquire)
    }

    /// Refuses further requests and stops the delivery task.
    pub fn shutdown(&self) {
        self.inner.ready.store(false, Ordering::Release);
        self.inner.wake.notify_one();
    }

    fn replica(&self) -> MutexGuard<'_, Replica> {
        self.inner.replica.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn ensure_ready(&self) -> Result<(), KvError> {
        if self.is_ready() {
            Ok(())
        } else {
            Err(KvError::NotReady)
        }
    }

    fn write(&self, cmd: KvCommand) -> Result<VectorClock, KvError> {
        self.ensure_ready()?;
        let m = self.replica().write(cmd)?;
        let vc = m.vc.clone();
        for outbox in &self.inner.outboxes {
            // A closed outbox only happens while the runtime is going away.
            let _ = outbox.send(m.clone());
        }
        Ok(vc)
    }

    pub fn put(&self, key: impl Into<String>, value: Value) -> Result<VectorClock, KvError> {
        self.write(KvCommand::Put {
            key: key.into(),
            value,
        })
    }

    pub fn delete(&self, key: impl Into<String>) -> Result<VectorClock, KvError> {
        self.write(KvCommand::Delete { key: key.into() })
    }

    pub fn get(&self, key: &str) -> Result<Option<Value>, KvError> {
        self.ensure_ready()?;
        Ok(self.replica().get(key).cloned())
    }

    /// Queues a batch of peer messages and wakes the delivery task. The
    /// whole batch is rejected if any message is malformed. Acceptance does
    /// not imply delivery.
    pub fn accept_peer_messages(&self, msgs: Vec<Message<KvCommand>>) -> Result<(), KvError> {
        self.ensure_ready()?;
        {
            let mut replica = self.replica();
            for m in &msgs {
                replica.validate(m)?;
            }
            for m in msgs {
                replica.receive(m)?;
            }
        }
        self.inner.wake.notify_one();
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        self.replica().metrics()
    }

    pub fn vc(&self) -> VectorClock {
        self.replica().vc().clone()
    }

    pub fn store(&self) -> Store {
        self.replica().store().clone()
    }
}

async fn drain_loop(node: Weak<Inner>, wake: Arc<Notify>) {
    loop {
        wake.notified().await;
        let Some(inner) = node.upgrade() else { return };
        if !inner.ready.load(Ordering::Acquire) {
            return;
        }
        loop {
            // One delivery plus its store update per critical section.
            let delivered = inner
                .replica
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .deliver_one();
            match delivered {
                Some(m) => debug!(node = inner.id.index(), msg = %m.id(), "delivered"),
                None => break,
            }
        }
    }
}

async fn peer_sender(
    client: reqwest::Client,
    url: String,
    mut rx: mpsc::UnboundedReceiver<Message<KvCommand>>,
    batch_max: usize,
) {
    while let Some(first) = rx.recv().await {
        let mut msgs = vec![first];
        while msgs.len() < batch_max {
            match rx.try_recv() {
                Ok(m) => msgs.push(m),
                Err(_) => break,
            }
        }
        send_with_retry(&client, &url, &MessageBatch { msgs }).await;
    }
}

async fn send_with_retry(client: &reqwest::Client, url: &str, batch: &MessageBatch) {
    let mut backoff = FIRST_BACKOFF;
    for attempt in 1..=SEND_ATTEMPTS {
        match client.post(url).json(batch).send().await {
            Ok(resp) if resp.status().is_success() => return,
            Ok(resp) if resp.status().is_client_error() => {
                warn!(%url, status = %resp.status(), "peer rejected batch");
                return;
            }
            Ok(resp) => debug!(%url, attempt, status = %resp.status(), "peer unavailable"),
            Err(e) => debug!(%url, attempt, error = %e, "send failed"),
        }
        tokio::time::sleep(backoff).await;
        backoff = (backoff * 2).min(MAX_BACKOFF);
    }
    warn!(%url, n = batch.msgs.len(), "giving up on batch");
}
