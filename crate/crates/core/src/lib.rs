//! Decentralized fictitious play with inertia over lossy networks, with
//! voluntary and limited communication.
//!
//! Agents repeatedly best-respond to estimates of each other's empirical
//! action frequencies. Estimates only change when a message crosses a
//! Bernoulli link. Senders decide per step and per peer whether to transmit
//! and may send a compressed summary of their frequency instead of the full
//! vector.

pub mod beliefs;
pub mod comm;
pub mod config;
pub mod engine;
pub mod error;
pub mod game;
pub mod metrics;
pub mod netsim;
pub mod oracle;
pub mod output;
pub mod strategy;

pub use beliefs::{AgentSnapshot, AgentState, ReconstructionRule};
pub use comm::{GateKind, PayloadKind, Protocol, ProtocolConfig};
pub use engine::{
    run_experiment, run_experiment_with_jobs, run_replication, ExperimentResult, GameSource, InitialBeliefs,
    InitialProfile, ReplicationResult, SimConfig, World,
};
pub use error::{Error, Result};
pub use game::{GameSpec, MatrixGame, TargetAssignmentGame};
pub use metrics::TraceRecord;
pub use netsim::{LinkModel, LinkSchedule, PairMatrix, Purpose, RngStream};
pub use strategy::{ActionIndex, MixedStrategy};
