//! Replicated in-memory key-value store built on causal broadcast.
//!
//! Each node owns one protocol process. Client writes are broadcast, applied
//! locally at once and POSTed to every peer; peer messages go into the delay
//! queue and a background task delivers them, applying each command to the
//! store in delivery order. Concurrent writes to the same key are settled by
//! the last-writer-wins rule in [`store`].
//!
//! Clients are assumed to stick to one node, so no causal metadata travels
//! between clients and servers.

pub mod cluster;
pub mod config;
pub mod error;
pub mod http;
pub mod node;
pub mod replica;
pub mod store;

pub use config::{NodeConfig, PeerConfig};
pub use error::KvError;
pub use node::Node;
pub use replica::{Metrics, Replica};
pub use store::{apply_command, KvCommand, Store};
