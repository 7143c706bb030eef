//! Two-queue, per-CPU slot scheduler.
//!
//! Nodes are either [`SchedulingClass::Dedicated`] (operator-flagged, always
//! idle) or [`SchedulingClass::Shared`] (someone works at the keyboard). Jobs
//! are routed to one of two FIFO queues:
//!
//! - the dedicated queue feeds dedicated nodes only;
//! - the shared queue feeds every eligible node.
//!
//! A node with `k` CPUs exposes `k` slots and holds up to `k` tasks at once.
//! When a node could serve both queues the dedicated queue drains first.
//!
//! Eligibility of a node for a task: a free slot, a toolchain building the
//! job's exact target (and the job's pinned compiler version, if any), and
//! for shared nodes `load < load_reject_threshold` plus, when
//! `stop_on_user_access` is set, no active user. Among eligible nodes the
//! one with the lowest cost wins, ties broken by node id. The cost is the
//! reported load plus `scheduling_cost_weight` times the fraction of the
//! node's slots already occupied.
//!
//! All methods are synchronous and deterministic; the manager and the
//! simulator drive the same code from their single event loops.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::task::TaskEvent;
use crate::types::{JobId, NodeDescriptor, NodeId, TargetTriple, TaskId};
use crate::xmapper::{resolve_toolchain, ToolchainId};

pub use crate::types::SchedulingClass;

pub const DEFAULT_LOAD_REJECT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Only operator-flagged idle nodes are used; jobs use the dedicated queue.
    DedicatedOnly,
    /// Every node is used; jobs use the shared queue.
    SharedAllowed,
    /// Every node is used; each job picks its queue (shared by default).
    Hybrid,
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dedicated" | "dedicated_only" => Ok(Policy::DedicatedOnly),
            "shared" | "shared_allowed" => Ok(Policy::SharedAllowed),
            "hybrid" => Ok(Policy::Hybrid),
            other => Err(format!(
                "unknown policy {other:?} (expected dedicated, shared or hybrid)"
            )),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::DedicatedOnly => "dedicated",
            Policy::SharedAllowed => "shared",
            Policy::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Shared nodes at or above this load get no new tasks. In `(0, 1]`.
    pub load_reject_threshold: f64,
    /// Stop and requeue tasks when a shared node's user becomes active,
    /// instead of demoting them to the lowest priority.
    pub stop_on_user_access: bool,
    pub scheduling_cost_weight: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            policy: Policy::Hybrid,
            load_reject_threshold: DEFAULT_LOAD_REJECT_THRESHOLD,
            stop_on_user_access: false,
            scheduling_cost_weight: 0.0,
        }
    }
}

impl PolicyConfig {
    pub fn with_policy(policy: Policy) -> Self {
        PolicyConfig {
            policy,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.load_reject_threshold > 0.0 && self.load_reject_threshold <= 1.0) {
            return Err(format!(
                "load_reject_threshold {} outside (0, 1]",
                self.load_reject_threshold
            ));
        }
        if !(self.scheduling_cost_weight >= 0.0 && self.scheduling_cost_weight.is_finite()) {
            return Err(format!(
                "scheduling_cost_weight {} must be a nonnegative number",
                self.scheduling_cost_weight
            ));
        }
        Ok(())
    }

    /// The queue a job's tasks go to, given the class the submitter asked for.
    pub fn queue_for(&self, requested: Option<SchedulingClass>) -> SchedulingClass {
        match self.policy {
            Policy::DedicatedOnly => SchedulingClass::Dedicated,
            Policy::SharedAllowed => SchedulingClass::Shared,
            Policy::Hybrid => requested.unwrap_or(SchedulingClass::Shared),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("node {0} is shared but the policy admits dedicated nodes only")]
    NodeExcluded(NodeId),
    #[error("node {0} is already registered")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("task {0} is already queued or running")]
    DuplicateEnqueue(TaskId),
    #[error("task {0} is not known to the scheduler")]
    UnknownTask(TaskId),
    #[error("job {0} is not registered with the scheduler")]
    UnknownJob(JobId),
}

/// Decides which class a node is scheduled under.
pub fn classify_node(
    desc: &NodeDescriptor,
    cfg: &PolicyConfig,
) -> Result<SchedulingClass, SchedulerError> {
    match (desc.scheduling_class, cfg.policy) {
        (SchedulingClass::Dedicated, _) => Ok(SchedulingClass::Dedicated),
        (SchedulingClass::Shared, Policy::DedicatedOnly) => {
            Err(SchedulerError::NodeExcluded(desc.node_id.clone()))
        }
        (SchedulingClass::Shared, _) => Ok(SchedulingClass::Shared),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub task: TaskId,
    pub node: NodeId,
    pub slot: usize,
    pub toolchain: ToolchainId,
}

/// What the scheduler asks its driver to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    /// Apply `event` to `task`. The task's slot has already been released.
    Task { task: TaskId, event: TaskEvent },
    /// Run the node's tasks at the lowest priority.
    DemotePriority(NodeId),
    /// Run the node's tasks at full priority.
    PromotePriority(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotUse {
    pub task: TaskId,
    pub started: bool,
}

#[derive(Debug, Clone)]
struct NodeEntry {
    desc: NodeDescriptor,
    class: SchedulingClass,
    slots: Vec<Option<SlotUse>>,
}

impl NodeEntry {
    fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    fn free_slot(&self) -> Option<usize> {
        self.slots.iter().position(Option::is_none)
    }
}

#[derive(Debug, Clone)]
struct JobConstraint {
    target: TargetTriple,
    version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Location {
    Queued(SchedulingClass),
    Slot(NodeId, usize),
}

#[derive(Debug, Clone, Default)]
pub struct SchedulerState {
    dedicated_queue: VecDeque<TaskId>,
    shared_queue: VecDeque<TaskId>,
    nodes: BTreeMap<NodeId, NodeEntry>,
    jobs: HashMap<JobId, JobConstraint>,
    located: HashMap<TaskId, Location>,
}

impl SchedulerState {
    pub fn new() -> Self {
        Self::default()
    }

    // ---- nodes -------------------------------------------------------

    /// Adds a node with all slots free. Returns the class it is scheduled under.
    pub fn add_node(
        &mut self,
        desc: NodeDescriptor,
        cfg: &PolicyConfig,
    ) -> Result<SchedulingClass, SchedulerError> {
        if self.nodes.contains_key(&desc.node_id) {
            return Err(SchedulerError::DuplicateNode(desc.node_id));
        }
        let class = classify_node(&desc, cfg)?;
        let slots = vec![None; desc.cpu_count as usize];
        self.nodes
            .insert(desc.node_id.clone(), NodeEntry { desc, class, slots });
        Ok(class)
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeDescriptor> {
        self.nodes.get(id).map(|e| &e.desc)
    }

    pub fn node_class(&self, id: &NodeId) -> Option<SchedulingClass> {
        self.nodes.get(id).map(|e| e.class)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.values().map(|e| &e.desc)
    }

    pub fn slots(&self, id: &NodeId) -> Option<&[Option<SlotUse>]> {
        self.nodes.get(id).map(|e| e.slots.as_slice())
    }

    pub fn set_load(&mut self, id: &NodeId, load: f64) -> Result<(), SchedulerError> {
        let entry = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| SchedulerError::UnknownNode(id.clone()))?;
        entry.desc.load = load.clamp(0.0, 1.0);
        Ok(())
    }

    /// Records a change in user activity and returns what must happen to
    /// the node's tasks. Dedicated nodes ignore user activity.
    pub fn on_user_activity(
        &mut self,
        id: &NodeId,
        active: bool,
        cfg: &PolicyConfig,
    ) -> Result<Vec<Directive>, SchedulerError> {
        let entry = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| SchedulerError::UnknownNode(id.clone()))?;
        entry.desc.user_active = active;
        if entry.class == SchedulingClass::Dedicated {
            return Ok(Vec::new());
        }
        if !active {
            return Ok(vec![Directive::PromotePriority(id.clone())]);
        }
        if !cfg.stop_on_user_access {
            return Ok(vec![Directive::DemotePriority(id.clone())]);
        }
        let mut out = Vec::new();
        for slot in entry.slots.iter_mut() {
            if let Some(used) = slot.take() {
                self.located.remove(&used.task);
                let event = if used.started {
                    TaskEvent::UserAccessBreak
                } else {
                    TaskEvent::OfferDeclined
                };
                out.push(Directive::Task {
                    task: used.task,
                    event,
                });
            }
        }
        Ok(out)
    }

    /// Removes the node and emits `NodeLost` for every task it held.
    pub fn on_node_lost(&mut self, id: &NodeId) -> Result<Vec<Directive>, SchedulerError> {
        let entry = self
            .nodes
            .remove(id)
            .ok_or_else(|| SchedulerError::UnknownNode(id.clone()))?;
        Ok(entry
            .slots
            .into_iter()
            .flatten()
            .map(|used| {
                self.located.remove(&used.task);
                Directive::Task {
                    task: used.task,
                    event: TaskEvent::NodeLost,
                }
            })
            .collect())
    }

    // ---- jobs and queues ----------------------------------------------

    /// Declares the placement constraints shared by all tasks of a job.
    pub fn register_job(&mut self, job: JobId, target: TargetTriple, version: Option<String>) {
        self.jobs.insert(job, JobConstraint { target, version });
    }

    /// Forgets a job and removes any of its tasks still queued. Tasks in
    /// slots are left alone; release them explicitly.
    pub fn forget_job(&mut self, job: &JobId) -> Vec<TaskId> {
        self.jobs.remove(job);
        let mut removed = Vec::new();
        for queue in [&mut self.dedicated_queue, &mut self.shared_queue] {
            queue.retain(|t| {
                if &t.job == job {
                    removed.push(t.clone());
                    false
                } else {
                    true
                }
            });
        }
        for t in &removed {
            self.located.remove(t);
        }
        removed
    }

    pub fn enqueue(&mut self, task: TaskId, class: SchedulingClass) -> Result<(), SchedulerError> {
        if !self.jobs.contains_key(&task.job) {
            return Err(SchedulerError::UnknownJob(task.job.clone()));
        }
        if self.located.contains_key(&task) {
            return Err(SchedulerError::DuplicateEnqueue(task));
        }
        self.located.insert(task.clone(), Location::Queued(class));
        self.queue_mut(class).push_back(task);
        Ok(())
    }

    pub fn queue(&self, class: SchedulingClass) -> &VecDeque<TaskId> {
        match class {
            SchedulingClass::Dedicated => &self.dedicated_queue,
            SchedulingClass::Shared => &self.shared_queue,
        }
    }

    fn queue_mut(&mut self, class: SchedulingClass) -> &mut VecDeque<TaskId> {
        match class {
            SchedulingClass::Dedicated => &mut self.dedicated_queue,
            SchedulingClass::Shared => &mut self.shared_queue,
        }
    }

    pub fn queued_len(&self) -> usize {
        self.dedicated_queue.len() + self.shared_queue.len()
    }

    pub fn in_flight(&self) -> usize {
        self.nodes.values().map(NodeEntry::occupied).sum()
    }

    pub fn is_queued(&self, task: &TaskId) -> bool {
        matches!(self.located.get(task), Some(Location::Queued(_)))
    }

    /// Node and slot currently holding `task`.
    pub fn slot_of(&self, task: &TaskId) -> Option<(&NodeId, usize)> {
        match self.located.get(task) {
            Some(Location::Slot(n, s)) => Some((n, *s)),
            _ => None,
        }
    }

    pub fn tasks_on(&self, id: &NodeId) -> Vec<TaskId> {
        self.nodes
            .get(id)
            .map(|e| e.slots.iter().flatten().map(|u| u.task.clone()).collect())
            .unwrap_or_default()
    }

    // ---- allocation --------------------------------------------------

    fn eligible(
        &self,
        entry: &NodeEntry,
        job: &JobConstraint,
        queue: SchedulingClass,
        cfg: &PolicyConfig,
    ) -> Option<ToolchainId> {
        entry.free_slot()?;
        if queue == SchedulingClass::Dedicated && entry.class != SchedulingClass::Dedicated {
            return None;
        }
        if entry.class == SchedulingClass::Shared {
            if entry.desc.load >= cfg.load_reject_threshold {
                return None;
            }
            if cfg.stop_on_user_access && entry.desc.user_active {
                return None;
            }
        }
        let tc = resolve_toolchain(&job.target, &entry.desc).ok()?;
        match &job.version {
            Some(v) if v != tc.version() => None,
            _ => Some(tc.clone()),
        }
    }

    fn best_node(
        &self,
        job: &JobConstraint,
        queue: SchedulingClass,
        cfg: &PolicyConfig,
    ) -> Option<(NodeId, ToolchainId)> {
        let cost = |e: &NodeEntry| {
            e.desc.load + cfg.scheduling_cost_weight * e.occupied() as f64 / e.slots.len() as f64
        };
        self.nodes
            .iter()
            .filter_map(|(id, e)| self.eligible(e, job, queue, cfg).map(|tc| (id, e, tc)))
            .min_by(|(ia, ea, _), (ib, eb, _)| {
                cost(ea).total_cmp(&cost(eb)).then_with(|| ia.cmp(ib))
            })
            .map(|(id, _, tc)| (id.clone(), tc))
    }

    /// Pairs the first placeable queued task with the best eligible node and
    /// occupies a slot for it. Returns `None` when no pairing exists.
    pub fn allocate_next(&mut self, cfg: &PolicyConfig) -> Option<Assignment> {
        if !self.nodes.values().any(|e| e.free_slot().is_some()) {
            return None;
        }
        for class in [SchedulingClass::Dedicated, SchedulingClass::Shared] {
            // Placement depends only on the job, so remember per-job answers.
            let mut by_job: HashMap<&JobId, Option<(NodeId, ToolchainId)>> = HashMap::new();
            let mut found = None;
            for (pos, task) in self.queue(class).iter().enumerate() {
                let choice = by_job.entry(&task.job).or_insert_with(|| {
                    self.jobs
                        .get(&task.job)
                        .and_then(|job| self.best_node(job, class, cfg))
                });
                if let Some((node, tc)) = choice {
                    found = Some((pos, node.clone(), tc.clone()));
                    break;
                }
            }
            if let Some((pos, node, toolchain)) = found {
                let task = self
                    .queue_mut(class)
                    .remove(pos)
                    .expect("position from iteration");
                let entry = self.nodes.get_mut(&node).expect("eligible node exists");
                let slot = entry.free_slot().expect("eligible node has a free slot");
                entry.slots[slot] = Some(SlotUse {
                    task: task.clone(),
                    started: false,
                });
                self.located
                    .insert(task.clone(), Location::Slot(node.clone(), slot));
                return Some(Assignment {
                    task,
                    node,
                    slot,
                    toolchain,
                });
            }
        }
        None
    }

    /// Records that the task in a slot has actually begun executing.
    pub fn mark_started(&mut self, task: &TaskId) -> Result<(), SchedulerError> {
        let Some(Location::Slot(node, slot)) = self.located.get(task) else {
            return Err(SchedulerError::UnknownTask(task.clone()));
        };
        let entry = self.nodes.get_mut(node).expect("located node exists");
        if let Some(used) = entry.slots[*slot].as_mut() {
            used.started = true;
        }
        Ok(())
    }

    /// Frees the slot held by `task`, if any.
    pub fn release(&mut self, task: &TaskId) -> Option<(NodeId, usize)> {
        match self.located.get(task) {
            Some(Location::Slot(_, _)) => {}
            _ => return None,
        }
        let Some(Location::Slot(node, slot)) = self.located.remove(task) else {
            unreachable!()
        };
        if let Some(entry) = self.nodes.get_mut(&node) {
            entry.slots[slot] = None;
        }
        Some((node, slot))
    }

    /// Removes a queued task. Returns false if it was not queued.
    pub fn dequeue(&mut self, task: &TaskId) -> bool {
        let Some(Location::Queued(class)) = self.located.get(task).cloned() else {
            return false;
        };
        self.located.remove(task);
        self.queue_mut(class).retain(|t| t != task);
        true
    }

    /// Consistency check used by tests and the simulator's checked mode.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen: HashMap<&TaskId, Location> = HashMap::new();
        for class in [SchedulingClass::Dedicated, SchedulingClass::Shared] {
            for t in self.queue(class) {
                if seen.insert(t, Location::Queued(class)).is_some() {
                    return Err(format!("task {t} queued twice"));
                }
            }
        }
        for (id, e) in &self.nodes {
            if e.slots.len() != e.desc.cpu_count as usize {
                return Err(format!(
                    "node {id} has {} slots for {} cpus",
                    e.slots.len(),
                    e.desc.cpu_count
                ));
            }
            for (i, used) in e.slots.iter().enumerate() {
                if let Some(u) = used {
                    if seen
                        .insert(&u.task, Location::Slot(id.clone(), i))
                        .is_some()
                    {
                        return Err(format!(
                            "task {} both queued and in a slot, or in two slots",
                            u.task
                        ));
                    }
                }
            }
        }
        if seen.len() != self.located.len() {
            return Err(format!(
                "index tracks {} tasks, structures hold {}",
                self.located.len(),
                seen.len()
            ));
        }
        for (t, loc) in seen {
            if self.located.get(t) != Some(&loc) {
                return Err(format!("index disagrees about task {t}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TuId;

    fn triple() -> TargetTriple {
        "x86_64-linux-gnu".parse().unwrap()
    }

    fn node(id: &str, cpus: u32, class: SchedulingClass, load: f64) -> NodeDescriptor {
        NodeDescriptor {
            node_id: NodeId::new(id).unwrap(),
            cpu_count: cpus,
            os_family: "linux".into(),
            cpu_arch: "x86_64".into(),
            toolchains: [ToolchainId::new(triple(), "11.4.0").unwrap()]
                .into_iter()
                .collect(),
            load,
            user_active: false,
            scheduling_class: class,
        }
    }

    fn job() -> JobId {
        JobId::new("job").unwrap()
    }

    fn tid(i: usize) -> TaskId {
        TaskId::new(job(), TuId::new(format!("t{i}")).unwrap())
    }

    fn state_with_job() -> SchedulerState {
        let mut s = SchedulerState::new();
        s.register_job(job(), triple(), None);
        s
    }

    #[test]
    fn classification() {
        let hybrid = PolicyConfig::default();
        let ded = PolicyConfig::with_policy(Policy::DedicatedOnly);
        assert_eq!(
            classify_node(&node("a", 2, SchedulingClass::Dedicated, 0.0), &ded),
            Ok(SchedulingClass::Dedicated)
        );
        assert_eq!(
            classify_node(&node("a", 2, SchedulingClass::Shared, 0.0), &hybrid),
            Ok(SchedulingClass::Shared)
        );
        assert_eq!(
            classify_node(&node("a", 2, SchedulingClass::Shared, 0.0), &ded),
            Err(SchedulerError::NodeExcluded(NodeId::new("a").unwrap()))
        );
    }

    #[test]
    fn enqueue_fifo_and_duplicates() {
        let mut s = state_with_job();
        s.enqueue(tid(1), SchedulingClass::Dedicated).unwrap();
        assert_eq!(
            s.queue(SchedulingClass::Dedicated)
                .iter()
                .cloned()
                .collect::<Vec<_>>(),
            vec![tid(1)]
        );
        assert_eq!(
            s.enqueue(tid(1), SchedulingClass::Shared),
            Err(SchedulerError::DuplicateEnqueue(tid(1)))
        );
        s.enqueue(tid(2), SchedulingClass::Shared).unwrap();
        s.enqueue(tid(3), SchedulingClass::Shared).unwrap();
        assert_eq!(
            s.queue(SchedulingClass::Shared)
                .iter()
                .cloned()
                .collect::<Vec<_>>(),
            vec![tid(2), tid(3)]
        );
        s.check_invariants().unwrap();
    }

    #[test]
    fn one_task_per_cpu() {
        let cfg = PolicyConfig::default();
        let mut s = state_with_job();
        s.add_node(node("n1", 2, SchedulingClass::Dedicated, 0.0), &cfg)
            .unwrap();
        for i in 0..5 {
            s.enqueue(tid(i), SchedulingClass::Shared).unwrap();
        }
        let mut got = Vec::new();
        while let Some(a) = s.allocate_next(&cfg) {
            got.push(a);
        }
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].slot, got[1].slot), (0, 1));
        assert_eq!(s.in_flight(), 2);
        assert_eq!(s.queued_len(), 3);
        s.check_invariants().unwrap();
    }

    #[test]
    fn shared_node_with_active_user_is_withheld_under_stop() {
        let cfg = PolicyConfig {
            stop_on_user_access: true,
            ..Default::default()
        };
        let mut s = state_with_job();
        let mut d = node("n1", 2, SchedulingClass::Shared, 0.0);
        d.user_active = true;
        s.add_node(d, &cfg).unwrap();
        s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
        assert_eq!(s.allocate_next(&cfg), None);
        // demotion policy keeps the node eligible
        assert!(s.allocate_next(&PolicyConfig::default()).is_some());
    }

    #[test]
    fn load_gate_applies_to_shared_only() {
        let cfg = PolicyConfig::default();
        let mut s = state_with_job();
        s.add_node(node("s", 1, SchedulingClass::Shared, 0.9), &cfg)
            .unwrap();
        s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
        assert_eq!(s.allocate_next(&cfg), None);
        s.add_node(node("d", 1, SchedulingClass::Dedicated, 0.9), &cfg)
            .unwrap();
        assert_eq!(s.allocate_next(&cfg).unwrap().node.as_str(), "d");
    }

    #[test]
    fn dedicated_queue_needs_dedicated_node_and_drains_first() {
        let cfg = PolicyConfig::default();
        let mut s = state_with_job();
        s.add_node(node("s", 1, SchedulingClass::Shared, 0.0), &cfg)
            .unwrap();
        s.enqueue(tid(0), SchedulingClass::Dedicated).unwrap();
        assert_eq!(s.allocate_next(&cfg), None);
        s.enqueue(tid(1), SchedulingClass::Shared).unwrap();
        let a = s.allocate_next(&cfg).unwrap();
        assert_eq!((a.task, a.node.as_str()), (tid(1), "s"));
        s.add_node(node("d", 1, SchedulingClass::Dedicated, 0.0), &cfg)
            .unwrap();
        s.enqueue(tid(2), SchedulingClass::Shared).unwrap();
        let a = s.allocate_next(&cfg).unwrap();
        assert_eq!((a.task, a.node.as_str()), (tid(0), "d"));
    }

    #[test]
    fn tie_break_lowest_load_then_id() {
        // Both registration orders must pick the load-0.1 node.
        for order in [["a", "b"], ["b", "a"]] {
            let cfg = PolicyConfig::default();
            let mut s = state_with_job();
            for id in order {
                let load = if id == "a" { 0.4 } else { 0.1 };
                s.add_node(node(id, 1, SchedulingClass::Shared, load), &cfg)
                    .unwrap();
            }
            s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
            assert_eq!(s.allocate_next(&cfg).unwrap().node.as_str(), "b");
        }
        let cfg = PolicyConfig::default();
        let mut s = state_with_job();
        s.add_node(node("z", 1, SchedulingClass::Shared, 0.2), &cfg)
            .unwrap();
        s.add_node(node("y", 1, SchedulingClass::Shared, 0.2), &cfg)
            .unwrap();
        s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
        assert_eq!(s.allocate_next(&cfg).unwrap().node.as_str(), "y");
    }

    #[test]
    fn skips_unplaceable_head() {
        let cfg = PolicyConfig::default();
        let mut s = state_with_job();
        let other = JobId::new("arm-job").unwrap();
        s.register_job(other.clone(), "arm-linux-gnueabi".parse().unwrap(), None);
        s.add_node(node("n", 1, SchedulingClass::Dedicated, 0.0), &cfg)
            .unwrap();
        s.enqueue(
            TaskId::new(other, TuId::new("x").unwrap()),
            SchedulingClass::Shared,
        )
        .unwrap();
        s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
        assert_eq!(s.allocate_next(&cfg).unwrap().task, tid(0));
    }

    #[test]
    fn version_pin_excludes_other_versions() {
        let cfg = PolicyConfig::default();
        let mut s = SchedulerState::new();
        s.register_job(job(), triple(), Some("12.1".into()));
        s.add_node(node("n", 1, SchedulingClass::Dedicated, 0.0), &cfg)
            .unwrap();
        s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
        assert_eq!(s.allocate_next(&cfg), None);
    }

    #[test]
    fn user_activity_events() {
        let stop = PolicyConfig {
            stop_on_user_access: true,
            ..Default::default()
        };
        let demote = PolicyConfig::default();
        let mut s = state_with_job();
        s.add_node(node("n", 2, SchedulingClass::Shared, 0.0), &stop)
            .unwrap();
        for i in 0..2 {
            s.enqueue(tid(i), SchedulingClass::Shared).unwrap();
            let a = s.allocate_next(&stop).unwrap();
            s.mark_started(&a.task).unwrap();
        }
        let n = NodeId::new("n").unwrap();
        assert_eq!(
            s.on_user_activity(&n, true, &demote).unwrap(),
            vec![Directive::DemotePriority(n.clone())]
        );
        assert_eq!(s.in_flight(), 2);
        assert_eq!(
            s.on_user_activity(&n, false, &demote).unwrap(),
            vec![Directive::PromotePriority(n.clone())]
        );
        let out = s.on_user_activity(&n, true, &stop).unwrap();
        assert_eq!(
            out,
            vec![
                Directive::Task {
                    task: tid(0),
                    event: TaskEvent::UserAccessBreak
                },
                Directive::Task {
                    task: tid(1),
                    event: TaskEvent::UserAccessBreak
                },
            ]
        );
        assert_eq!(s.in_flight(), 0);
        s.check_invariants().unwrap();
        assert!(matches!(
            s.on_user_activity(&NodeId::new("ghost").unwrap(), true, &stop),
            Err(SchedulerError::UnknownNode(_))
        ));
    }

    #[test]
    fn node_lost_requeues_everything() {
        let cfg = PolicyConfig::default();
        let mut s = state_with_job();
        s.add_node(node("n", 2, SchedulingClass::Dedicated, 0.0), &cfg)
            .unwrap();
        s.add_node(node("z", 1, SchedulingClass::Dedicated, 0.0), &cfg)
            .unwrap();
        for i in 0..2 {
            s.enqueue(tid(i), SchedulingClass::Shared).unwrap();
        }
        while s.allocate_next(&cfg).is_some() {}
        let m = NodeId::new("z").unwrap();
        assert!(s.on_node_lost(&m).unwrap().is_empty());
        assert!(s.node(&m).is_none());
        let n = NodeId::new("n").unwrap();
        let out = s.on_node_lost(&n).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|d| matches!(
            d,
            Directive::Task {
                event: TaskEvent::NodeLost,
                ..
            }
        )));
        // last node gone: nothing can be placed
        s.enqueue(tid(0), SchedulingClass::Shared).unwrap();
        assert_eq!(s.allocate_next(&cfg), None);
        s.check_invariants().unwrap();
    }
}
