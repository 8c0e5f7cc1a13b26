use std::collections::BTreeSet;
use std::net::SocketAddr;

use cbcast::ProcessId;
use serde::{Deserialize, Serialize};

use crate::error::KvError;

pub const DEFAULT_BATCH_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub id: ProcessId,
    /// Base URL, e.g. `http://10.0.0.2:7000`.
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub self_id: ProcessId,
    pub peers: Vec<PeerConfig>,
    pub listen: SocketAddr,
    #[serde(default = "default_batch_max")]
    pub batch_max: usize,
}

fn default_batch_max() -> usize {
    DEFAULT_BATCH_MAX
}

impl NodeConfig {
    /// Cluster size: this node plus its peers.
    pub fn n(&self) -> usize {
        self.peers.len() + 1
    }

    /// Ids must be exactly `0..n` with this node's id not among the peers.
    pub fn validate(&self) -> Result<(), KvError> {
        let n = self.n();
        if self.batch_max == 0 {
            return Err(KvError::Config("batch_max must be at least 1".into()));
        }
        let mut ids = BTreeSet::new();
        ids.insert(self.self_id);
        for peer in &self.peers {
            if !ids.insert(peer.id) {
                return Err(KvError::Config(format!("process id {} listed twice", peer.id.index())));
            }
            if peer.url.trim().is_empty() {
                return Err(KvError::Config(format!("peer {} has an empty URL", peer.id.index())));
            }
        }
        if let Some(bad) = ids.iter().find(|id| id.index() >= n) {
            return Err(KvError::Config(format!(
                "process id {} out of range for a cluster of {n}",
                bad.index()
            )));
        }
        Ok(())
    }
}
