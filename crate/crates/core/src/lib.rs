//! Causal broadcast over vector clocks.
//!
//! - [`vector_clock`]: clocks and their partial order.
//! - [`protocol`]: the per-process state machine (`receive`, `deliver`,
//!   `broadcast`).
//! - [`checker`]: local and global causal-delivery checks and the
//!   clock/happens-before correspondence oracle.
//! - [`simulator`]: seeded whole-cluster runs over a lossy, reordering network.
//! - [`trace`]: the JSON-lines trace format shared by the simulator and checker.
//! - [`figures`]: scripted example executions with known clocks.
//!
//! ```
//! use cbcast::{ProcessId, ProcessState, VectorClock};
//!
//! let alice = ProcessState::new(2, ProcessId(0)).unwrap();
//! let bob = ProcessState::new(2, ProcessId(1)).unwrap();
//!
//! let (m, _alice) = alice.broadcast("hi");
//! assert_eq!(m.vc, VectorClock::from([1, 0]));
//!
//! let (delivered, bob) = bob.receive(m).unwrap().deliver().unwrap();
//! assert_eq!(delivered.raw, "hi");
//! assert_eq!(bob.vc(), &VectorClock::from([1, 0]));
//! ```

pub mod checker;
pub mod error;
pub mod figures;
pub mod history;
pub mod message;
pub mod protocol;
pub mod simulator;
pub mod trace;
pub mod vector_clock;

pub use checker::{check_all, check_cd, check_lcd, check_vc_hb_correspondence, ExecutionState, Report, Violation};
pub use error::{Error, Result};
pub use history::{hist_vc, Event, EventId, History};
pub use message::{Message, MessageId};
pub use protocol::{deliverable, dequeue, Op, ProcessState};
pub use simulator::{SimConfig, Simulation};
pub use trace::{TraceEvent, TraceKind};
pub use vector_clock::{ProcessId, VectorClock};
