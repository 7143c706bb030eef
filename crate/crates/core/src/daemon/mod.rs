//! The per-node service: resource probing, user-presence monitoring,
//! slot-bounded compilation and priority control.

mod activity;
mod exec;
mod priority;
mod probe;
mod service;

use std::path::PathBuf;

use crate::wire::WireError;
use crate::xmapper::ToolchainId;

pub use self::activity::{ActivityProbe, ScriptedTrace, TraceError, DEFAULT_IDLE_WINDOW};
pub use self::exec::{execute_task, Executor, SlotGuard, Slots};
pub use self::priority::{
    select_priority, OsPriority, PriorityControl, PriorityState, RecordingPriority,
};
pub use self::probe::{
    discover_toolchains, hostname, normalize_load, probe_node, read_load, ProbeOverrides, Toolchain,
};
pub use self::service::{run_daemon, DaemonConfig};

#[derive(Debug, thiserror::Error)]
pub enum DaemonError {
    #[error("no toolchain.meta found under {0}")]
    NoToolchainFound(PathBuf),
    #[error("bad toolchain description: {0}")]
    Meta(String),
    #[error("toolchain {0} is not installed here")]
    ToolchainMissing(ToolchainId),
    #[error("compiler failed (exit {exit_code:?}): {stderr}")]
    CompileError {
        exit_code: Option<i32>,
        stderr: String,
    },
    #[error("all compile slots are busy")]
    SlotExhausted,
    #[error("manager refused registration: {code}: {message}")]
    Rejected { code: String, message: String },
    #[error("fault injected")]
    FaultInjected,
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}
