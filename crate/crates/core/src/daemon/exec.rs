use std::collections::BTreeMap;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::digest::Digest;
use crate::wire::{ExecuteTask, TaskOutcome, TaskResult, MAX_OBJECT_BYTES};
use crate::xmapper::ToolchainId;

use super::priority::PriorityState;
use super::probe::Toolchain;
use super::DaemonError;

const STDERR_EXCERPT: usize = 4096;

/// One compile slot per CPU.
#[derive(Debug)]
pub struct Slots {
    capacity: usize,
    used: AtomicUsize,
}

/// Holds a slot until dropped.
#[derive(Debug)]
pub struct SlotGuard {
    slots: Arc<Slots>,
}

impl Drop for SlotGuard {
    fn drop(&mut self) {
        self.slots.used.fetch_sub(1, Ordering::AcqRel);
    }
}

impl Slots {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Slots {
            capacity,
            used: AtomicUsize::new(0),
        })
    }

    pub fn try_acquire(self: &Arc<Self>) -> Result<SlotGuard, DaemonError> {
        self.used
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| {
                (u < self.capacity).then_some(u + 1)
            })
            .map(|_| SlotGuard {
                slots: Arc::clone(self),
            })
            .map_err(|_| DaemonError::SlotExhausted)
    }

    pub fn in_use(&self) -> usize {
        self.used.load(Ordering::Acquire)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Compiles one shipped unit in a scratch directory and returns the object.
///
/// The command line is
/// `<compiler> <toolchain args> <compile args> -fdebug-prefix-map=<tmp>=. -frandom-seed=<seed> -c tu.<ext> -o tu.o`
/// so the object does not depend on where or when it was built.
pub fn execute_task(
    tc: &Toolchain,
    task: &ExecuteTask,
    prio: &PriorityState,
) -> Result<Vec<u8>, DaemonError> {
    if tc.id != task.toolchain {
        return Err(DaemonError::ToolchainMissing(task.toolchain.clone()));
    }
    if !matches!(task.source_ext.as_str(), "i" | "ii") {
        return Err(DaemonError::CompileError {
            exit_code: None,
            stderr: format!("bad source extension {:?}", task.source_ext),
        });
    }
    let tmp = tempfile::Builder::new()
        .prefix("distcom-")
        .tempdir()
        .map_err(|e| DaemonError::Io(e.to_string()))?;
    let src = format!("tu.{}", task.source_ext);
    std::fs::write(tmp.path().join(&src), &task.source)
        .map_err(|e| DaemonError::Io(e.to_string()))?;
    let seed = Digest::of(task.tu_id.as_str().as_bytes());
    let child = Command::new(&tc.compiler)
        .args(&tc.leading_args)
        .args(&task.compile_args)
        .arg(format!("-fdebug-prefix-map={}=.", tmp.path().display()))
        .arg(format!("-frandom-seed={}", seed.prefix(16)))
        .args(["-c", &src, "-o", "tu.o"])
        .current_dir(tmp.path())
        .env("SOURCE_DATE_EPOCH", "0")
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| DaemonError::CompileError {
            exit_code: None,
            stderr: format!("{}: {e}", tc.compiler.display()),
        })?;
    let pid = child.id();
    prio.attach(pid);
    let output = child.wait_with_output();
    prio.detach(pid);
    let output = output.map_err(|e| DaemonError::Io(e.to_string()))?;
    if !output.status.success() {
        let text = String::from_utf8_lossy(&output.stderr);
        let start = text.len().saturating_sub(STDERR_EXCERPT);
        let start = (start..text.len())
            .find(|i| text.is_char_boundary(*i))
            .unwrap_or(text.len());
        return Err(DaemonError::CompileError {
            exit_code: output.status.code(),
            stderr: text[start..].to_owned(),
        });
    }
    let object =
        std::fs::read(tmp.path().join("tu.o")).map_err(|e| DaemonError::Io(e.to_string()))?;
    if object.len() > MAX_OBJECT_BYTES {
        return Err(DaemonError::CompileError {
            exit_code: None,
            stderr: format!("object of {} bytes too large", object.len()),
        });
    }
    Ok(object)
}

/// Toolchains, slots and priority of one daemon.
pub struct Executor {
    pub toolchains: BTreeMap<ToolchainId, Toolchain>,
    pub slots: Arc<Slots>,
    pub priority: Arc<PriorityState>,
}

impl Executor {
    /// Decides whether to take an offered task.
    pub fn admit(&self, task: &ExecuteTask) -> Result<SlotGuard, DaemonError> {
        if !self.toolchains.contains_key(&task.toolchain) {
            return Err(DaemonError::ToolchainMissing(task.toolchain.clone()));
        }
        self.slots.try_acquire()
    }

    /// Runs an admitted task to a result message.
    pub fn run(&self, _slot: SlotGuard, task: &ExecuteTask) -> TaskResult {
        let outcome = match self
            .toolchains
            .get(&task.toolchain)
            .ok_or_else(|| DaemonError::ToolchainMissing(task.toolchain.clone()))
            .and_then(|tc| execute_task(tc, task, &self.priority))
        {
            Ok(object) => TaskOutcome::Object {
                digest: Digest::of(&object),
                object,
            },
            Err(DaemonError::CompileError { exit_code, stderr }) => {
                TaskOutcome::Error { exit_code, stderr }
            }
            Err(e) => TaskOutcome::Error {
                exit_code: None,
                stderr: e.to_string(),
            },
        };
        TaskResult {
            job_id: task.job_id.clone(),
            tu_id: task.tu_id.clone(),
            outcome,
        }
    }
}
