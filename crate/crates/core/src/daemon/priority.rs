use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use crate::types::SchedulingClass;
use crate::wire::PriorityMode;

/// A shared node whose user is present yields; everything else runs flat out.
pub fn select_priority(user_active: bool, class: SchedulingClass) -> PriorityMode {
    match (class, user_active) {
        (SchedulingClass::Shared, true) => PriorityMode::Lowest,
        _ => PriorityMode::RealTime,
    }
}

/// Applies a priority mode to one compiler process.
pub trait PriorityControl: Send + Sync {
    fn apply(&self, pid: u32, mode: PriorityMode);
}

/// Adjusts the nice value of the compiler processes this daemon started.
/// `RealTime` is the most favourable value the daemon may set without
/// privileges, which is its own nice value; `Lowest` is 19.
#[derive(Debug)]
pub struct OsPriority {
    base: i32,
}

impl OsPriority {
    pub fn new() -> Self {
        // SAFETY: getpriority has no memory-safety preconditions.
        let base = unsafe { libc::getpriority(libc::PRIO_PROCESS, 0) };
        OsPriority { base }
    }
}

impl Default for OsPriority {
    fn default() -> Self {
        Self::new()
    }
}

impl PriorityControl for OsPriority {
    /// Applies to `pid` and its descendants, since compiler drivers run
    /// their passes as child processes.
    fn apply(&self, pid: u32, mode: PriorityMode) {
        let value = match mode {
            PriorityMode::RealTime => self.base,
            PriorityMode::Lowest => 19,
        };
        for p in std::iter::once(pid).chain(descendants(pid)) {
            // SAFETY: setpriority only touches kernel scheduling state of `p`.
            let rc = unsafe { libc::setpriority(libc::PRIO_PROCESS, p as libc::id_t, value) };
            if rc != 0 {
                log::debug!(
                    "setpriority({p}, {value}): {}",
                    std::io::Error::last_os_error()
                );
            }
        }
    }
}

fn descendants(root: u32) -> Vec<u32> {
    let Ok(dir) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    let parents: Vec<(u32, u32)> = dir
        .filter_map(|e| e.ok()?.file_name().to_str()?.parse::<u32>().ok())
        .filter_map(|pid| {
            let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
            // The command name may contain spaces; fields resume after the last ')'.
            let rest = &stat[stat.rfind(')')? + 2..];
            let ppid = rest.split_whitespace().nth(1)?.parse().ok()?;
            Some((pid, ppid))
        })
        .collect();
    let mut out = Vec::new();
    let mut frontier = vec![root];
    while let Some(p) = frontier.pop() {
        for &(child, parent) in &parents {
            if parent == p && !out.contains(&child) {
                out.push(child);
                frontier.push(child);
            }
        }
    }
    out
}

/// Records calls instead of touching the OS.
#[derive(Debug, Default, Clone)]
pub struct RecordingPriority {
    calls: Arc<Mutex<Vec<(u32, PriorityMode)>>>,
}

impl RecordingPriority {
    pub fn calls(&self) -> Vec<(u32, PriorityMode)> {
        self.calls.lock().expect("poisoned").clone()
    }
}

impl PriorityControl for RecordingPriority {
    fn apply(&self, pid: u32, mode: PriorityMode) {
        self.calls.lock().expect("poisoned").push((pid, mode));
    }
}

/// Current mode plus the compiler processes it applies to.
pub struct PriorityState {
    inner: Mutex<(PriorityMode, BTreeSet<u32>)>,
    control: Box<dyn PriorityControl>,
    transitions: Mutex<Vec<PriorityMode>>,
}

impl PriorityState {
    pub fn new(control: Box<dyn PriorityControl>) -> Self {
        PriorityState {
            inner: Mutex::new((PriorityMode::RealTime, BTreeSet::new())),
            control,
            transitions: Mutex::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> PriorityMode {
        self.inner.lock().expect("poisoned").0
    }

    /// Switches mode and re-applies it to every running compiler.
    pub fn set_mode(&self, mode: PriorityMode) {
        let mut g = self.inner.lock().expect("poisoned");
        if g.0 == mode {
            return;
        }
        g.0 = mode;
        self.transitions.lock().expect("poisoned").push(mode);
        for &pid in &g.1 {
            self.control.apply(pid, mode);
        }
    }

    /// Every mode change so far, in order.
    pub fn transitions(&self) -> Vec<PriorityMode> {
        self.transitions.lock().expect("poisoned").clone()
    }

    pub fn attach(&self, pid: u32) {
        let mut g = self.inner.lock().expect("poisoned");
        g.1.insert(pid);
        self.control.apply(pid, g.0);
    }

    pub fn detach(&self, pid: u32) {
        self.inner.lock().expect("poisoned").1.remove(&pid);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_table() {
        use PriorityMode::*;
        use SchedulingClass::*;
        let table = [
            ((false, Shared), RealTime),
            ((true, Shared), Lowest),
            ((false, Dedicated), RealTime),
            ((true, Dedicated), RealTime),
        ];
        for ((active, class), want) in table {
            assert_eq!(select_priority(active, class), want, "{active} {class}");
        }
    }

    #[test]
    fn mode_changes_reach_running_processes() {
        let rec = RecordingPriority::default();
        let st = PriorityState::new(Box::new(rec.clone()));
        st.attach(10);
        st.set_mode(PriorityMode::Lowest);
        st.attach(11);
        st.set_mode(PriorityMode::Lowest);
        st.detach(10);
        st.set_mode(PriorityMode::RealTime);
        assert_eq!(
            rec.calls(),
            vec![
                (10, PriorityMode::RealTime),
                (10, PriorityMode::Lowest),
                (11, PriorityMode::Lowest),
                (11, PriorityMode::RealTime),
            ]
        );
        assert_eq!(
            st.transitions(),
            vec![PriorityMode::Lowest, PriorityMode::RealTime]
        );
    }

    #[test]
    fn os_priority_lowers_a_child_and_its_children() {
        let mut child = std::process::Command::new("sh")
            .args(["-c", "sleep 5 & wait"])
            .spawn()
            .unwrap();
        std::thread::sleep(std::time::Duration::from_millis(100));
        let os = OsPriority::new();
        os.apply(child.id(), PriorityMode::Lowest);
        let kids = descendants(child.id());
        // SAFETY: plain syscalls.
        let nice = |p: u32| unsafe { libc::getpriority(libc::PRIO_PROCESS, p as libc::id_t) };
        let (parent, grandchild) = (nice(child.id()), kids.first().map(|&k| nice(k)));
        child.kill().ok();
        child.wait().ok();
        assert_eq!(parent, 19);
        assert_eq!(grandchild, Some(19));
    }
}
