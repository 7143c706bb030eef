//! Distributed compilation over idle networked machines.
//!
//! A build is split into translation units, each compiled into exactly one
//! object file by a remote daemon. The object file is the unit of
//! checkpointing: a build that is interrupted resumes by compiling only the
//! units that have no committed object yet.
//!
//! The crate is organised around the pieces of a running farm:
//!
//! - [`task`] and [`checkpoint`]: the per-task state machine and the
//!   append-only record of finished objects.
//! - [`scheduler`]: node classification, the dedicated and shared task
//!   queues and per-CPU slot allocation.
//! - [`xmapper`]: exact target-triple matching of jobs to node toolchains.
//! - [`objcache`]: a content-addressed object cache consulted before dispatch.
//! - [`manager`], [`daemon`], [`client`]: the networked services, talking the
//!   framed protocol in [`wire`].
//! - [`simnet`]: a deterministic discrete-event simulator that drives the
//!   same scheduler code against modeled fleets.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod checkpoint;
pub mod client;
pub mod daemon;
pub mod digest;
pub mod kv;
pub mod manager;
pub mod objcache;
pub mod scheduler;
pub mod simnet;
pub mod task;
pub mod types;
pub mod wire;
pub mod xmapper;

pub use checkpoint::{CheckpointEntry, CheckpointError, CheckpointFile, CheckpointLog};
pub use digest::Digest;
pub use scheduler::{Policy, PolicyConfig, SchedulerState, SchedulingClass};
pub use task::{transition, CompileTask, TaskEvent, TaskState};
pub use types::{JobId, NodeDescriptor, NodeId, TargetTriple, TaskId, TranslationUnit, TuId};
pub use xmapper::ToolchainId;
