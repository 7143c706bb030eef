//! The build manager: node registry, job intake, dispatch and checkpointing.
//!
//! [`ManagerCore`] holds all state and is driven by explicit calls with the
//! current time, which makes it testable without sockets. [`ManagerServer`]
//! wraps it in a TCP service.

mod config;
mod core;
mod server;

pub use self::config::ManagerConfig;
pub use self::core::{
    JobCounters, JobPhase, JobStatus, ManagerCore, ManagerError, NodeLoss, Outbound,
};
pub use self::server::ManagerServer;
