//! Deterministic in-process cluster of [`Replica`]s over a seeded network
//! that delivers peer messages in arbitrary order. Used to check
//! convergence without sockets or threads.

use cbcast::{Message, ProcessId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::error::KvError;
use crate::replica::Replica;
use crate::store::KvCommand;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Get(String),
    Put(String, Value),
    Delete(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Value(Option<Value>),
    Written(Message<KvCommand>),
}

pub struct LocalCluster {
    replicas: Vec<Replica>,
    network: Vec<(ProcessId, Message<KvCommand>)>,
    rng: ChaCha8Rng,
}

impl LocalCluster {
    pub fn new(n: usize, seed: u64) -> Result<Self, KvError> {
        Ok(Self {
            replicas: (0..n)
                .map(|i| Replica::new(n, ProcessId(i)))
                .collect::<Result<_, _>>()?,
            network: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn in_flight(&self) -> usize {
        self.network.len()
    }

    pub fn request(&mut self, node: ProcessId, req: Request) -> Result<Response, KvError> {
        let replica = &mut self.replicas[node.index()];
        let cmd = match req {
            Request::Get(key) => return Ok(Response::Value(replica.get(&key).cloned())),
            Request::Put(key, value) => KvCommand::Put { key, value },
            Request::Delete(key) => KvCommand::Delete { key },
        };
        let m = replica.write(cmd)?;
        for dest in (0..self.replicas.len()).map(ProcessId).filter(|d| *d != node) {
            self.network.push((dest, m.clone()));
        }
        Ok(Response::Written(m))
    }

    /// Hands one random in-flight message to its destination, which then
    /// delivers whatever became deliverable. False if the network is empty.
    pub fn step_network(&mut self) -> bool {
        if self.network.is_empty() {
            return false;
        }
        let i = self.rng.random_range(0..self.network.len());
        let (dest, m) = self.network.swap_remove(i);
        let replica = &mut self.replicas[dest.index()];
        replica
            .receive(m)
            .expect("cluster messages have the cluster's clock length");
        replica.deliver_ready();
        true
    }

    /// Empties the network.
    pub fn drain(&mut self) {
        while self.step_network() {}
    }

    /// Issues `requests` random client requests at random nodes over the
    /// given key alphabet, interleaved with random network progress.
    pub fn random_workload(&mut self, requests: usize, keys: &[&str]) -> Result<(), KvError> {
        let n = self.replicas.len();
        for i in 0..requests {
            let node = ProcessId(self.rng.random_range(0..n));
            let key = keys[self.rng.random_range(0..keys.len())].to_string();
            let req = match self.rng.random_range(0..10) {
                0..=2 => Request::Get(key),
                3..=7 => Request::Put(key, Value::from(i)),
                _ => Request::Delete(key),
            };
            self.request(node, req)?;
            for _ in 0..self.rng.random_range(0..4) {
                self.step_network();
            }
        }
        Ok(())
    }

    pub fn canonical_stores(&self) -> Vec<String> {
        self.replicas
            .iter()
            .map(|r| r.store().canonical_json())
            .collect()
    }
}

/// The 26 lowercase ASCII letters as single-character keys.
pub fn letter_keys() -> Vec<&'static str> {
    const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";
    (0..LETTERS.len()).map(|i| &LETTERS[i..i + 1]).collect()
}
