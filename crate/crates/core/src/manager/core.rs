use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{CheckpointError, CheckpointFile, Commit};
use crate::digest::Digest;
use crate::objcache::{cache_key, Lookup, ObjectCache};
use crate::scheduler::{Directive, SchedulerError, SchedulerState};
use crate::task::{CompileTask, TaskEvent, TaskState};
use crate::types::{
    JobId, NodeDescriptor, NodeId, SchedulingClass, TargetTriple, TaskId, TranslationUnit, TuId,
};
use crate::wire::{
    ExecuteTask, Heartbeat, Message, OfferReply, PriorityMode, SetPriority, SubmitJob, TaskOutcome,
    TaskResult, MAX_OBJECT_BYTES,
};
use crate::xmapper::{version_consistency_check, ToolchainId, VersionCheck};

use super::config::ManagerConfig;

#[derive(Debug, thiserror::Error)]
pub enum ManagerError {
    #[error("node {0} is already registered")]
    DuplicateNodeId(NodeId),
    #[error("node {0} is not registered")]
    UnknownNode(NodeId),
    #[error("node {0} is excluded by the scheduling policy")]
    NodeExcluded(NodeId),
    #[error("invalid node descriptor: {0}")]
    InvalidNode(String),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("job has no translation units")]
    EmptyJob,
    #[error("no registered node can build for {0}")]
    NoCompatibleNode(TargetTriple),
    #[error(
        "compiler versions differ across nodes for {target}: {offenders:?} differ from {majority}"
    )]
    MixedVersions {
        target: TargetTriple,
        majority: String,
        offenders: Vec<NodeId>,
    },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{tu} of job {job} has no committed object")]
    NotReady { job: JobId, tu: TuId },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ManagerError {
    /// Stable identifier sent in error replies.
    pub fn code(&self) -> &'static str {
        match self {
            ManagerError::DuplicateNodeId(_) => "DuplicateNodeId",
            ManagerError::UnknownNode(_) => "UnknownNode",
            ManagerError::NodeExcluded(_) => "NodeExcluded",
            ManagerError::InvalidNode(_) => "InvalidNode",
            ManagerError::UnknownJob(_) => "UnknownJob",
            ManagerError::EmptyJob => "EmptyJob",
            ManagerError::NoCompatibleNode(_) => "NoCompatibleNode",
            ManagerError::MixedVersions { .. } => "MixedVersions",
            ManagerError::BadRequest(_) => "BadRequest",
            ManagerError::NotReady { .. } => "NotReady",
            ManagerError::Checkpoint(_) => "Checkpoint",
            ManagerError::Io(_) => "Io",
        }
    }
}

/// A message the driver must deliver to a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: NodeId,
    pub msg: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Compiling,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLoss {
    pub node: NodeId,
    /// Checkpoint entries of the job at the moment the node was declared lost.
    pub committed_at: usize,
    /// Tasks of the job the node held at that moment.
    pub in_flight: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCounters {
    /// ExecuteTask offers sent.
    pub dispatched: u64,
    /// Returns to the queue for any reason.
    pub requeued: u64,
    /// Objects accepted from daemons.
    pub executed_ok: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Units found committed in the checkpoint log at submission.
    pub restored: u64,
}

/// Reply body for a job status request and for a submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: JobId,
    pub phase: JobPhase,
    pub total: usize,
    pub committed: usize,
    pub counts: BTreeMap<TaskState, usize>,
    pub percent_complete: f64,
    pub elapsed_ms: u64,
    pub counters: JobCounters,
    pub node_losses: Vec<NodeLoss>,
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Debug)]
struct Unit {
    tu: TranslationUnit,
    source_ext: String,
    source: Vec<u8>,
}

#[derive(Debug)]
struct Job {
    id: JobId,
    queue: SchedulingClass,
    order: Vec<TuId>,
    units: HashMap<TuId, Unit>,
    tasks: BTreeMap<TuId, CompileTask>,
    toolchains: HashMap<TuId, ToolchainId>,
    /// Toolchain used for cache keys when nothing else is known.
    cache_toolchain: Option<ToolchainId>,
    checkpoint: CheckpointFile,
    dir: PathBuf,
    phase: JobPhase,
    counters: JobCounters,
    losses: Vec<NodeLoss>,
    started: Duration,
    finished: Option<Duration>,
    failure: Option<String>,
}

impl Job {
    fn object_path(&self, tu: &TuId) -> PathBuf {
        object_path(&self.dir, tu)
    }
}

fn object_path(dir: &Path, tu: &TuId) -> PathBuf {
    let name = Digest::of(tu.as_str().as_bytes());
    dir.join("obj").join(format!("{}.o", name.prefix(32)))
}

#[derive(Debug)]
struct NodeRecord {
    last_seen: Duration,
    user_active: bool,
    priority: PriorityMode,
}

/// The manager's state, driven by explicit calls. Time is passed in as an
/// offset from an arbitrary origin so the logic stays deterministic.
pub struct ManagerCore {
    cfg: ManagerConfig,
    sched: SchedulerState,
    nodes: BTreeMap<NodeId, NodeRecord>,
    jobs: BTreeMap<JobId, Job>,
    cache: Option<ObjectCache>,
    histories: Option<HashMap<TaskId, Vec<TaskState>>>,
}

impl ManagerCore {
    pub fn new(cfg: ManagerConfig) -> Result<Self, ManagerError> {
        std::fs::create_dir_all(&cfg.staging_dir)?;
        let cache = match &cfg.cache_dir {
            Some(dir) => Some(ObjectCache::open(dir, cfg.cache_capacity)?),
            None => None,
        };
        Ok(ManagerCore {
            cfg,
            sched: SchedulerState::new(),
            nodes: BTreeMap::new(),
            jobs: BTreeMap::new(),
            cache,
            histories: None,
        })
    }

    /// Keeps the sequence of states every task passes through, transient
    /// ones included.
    pub fn record_histories(&mut self) {
        self.histories.get_or_insert_with(HashMap::new);
    }

    pub fn history(&self, task: &TaskId) -> Option<&[TaskState]> {
        self.histories.as_ref()?.get(task).map(Vec::as_slice)
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.sched
    }

    pub fn cache(&self) -> Option<&ObjectCache> {
        self.cache.as_ref()
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn priority_of(&self, node: &NodeId) -> Option<PriorityMode> {
        self.nodes.get(node).map(|n| n.priority)
    }

    pub fn task(&self, task: &TaskId) -> Option<&CompileTask> {
        self.jobs.get(&task.job)?.tasks.get(&task.tu)
    }

    pub fn register_node(
        &mut self,
        desc: NodeDescriptor,
        now: Duration,
    ) -> Result<Vec<Outbound>, ManagerError> {
        desc.validate()
            .map_err(|e| ManagerError::InvalidNode(e.to_string()))?;
        if self.nodes.contains_key(&desc.node_id) {
            return Err(ManagerError::DuplicateNodeId(desc.node_id));
        }
        let id = desc.node_id.clone();
        let user_active = desc.user_active;
        let class = self
            .sched
            .add_node(desc, &self.cfg.policy)
            .map_err(|e| match e {
                SchedulerError::NodeExcluded(n) => ManagerError::NodeExcluded(n),
                SchedulerError::DuplicateNode(n) => ManagerError::DuplicateNodeId(n),
                other => ManagerError::BadRequest(other.to_string()),
            })?;
        let priority = if class == SchedulingClass::Shared && user_active {
            PriorityMode::Lowest
        } else {
            PriorityMode::RealTime
        };
        log::info!("node {id} registered as {class}");
        self.nodes.insert(
            id.clone(),
            NodeRecord {
                last_seen: now,
                user_active,
                priority,
            },
        );
        let mut out = vec![Outbound {
            to: id,
            msg: Message::SetPriority(SetPriority { mode: priority }),
        }];
        out.extend(self.pump());
        Ok(out)
    }

    pub fn heartbeat(
        &mut self,
        hb: &Heartbeat,
        now: Duration,
    ) -> Result<Vec<Outbound>, ManagerError> {
        let rec = self
            .nodes
            .get_mut(&hb.node_id)
            .ok_or_else(|| ManagerError::UnknownNode(hb.node_id.clone()))?;
        rec.last_seen = now;
        let changed = rec.user_active != hb.user_active;
        rec.user_active = hb.user_active;
        self.sched
            .set_load(&hb.node_id, hb.load.clamp(0.0, 1.0))
            .map_err(|_| ManagerError::UnknownNode(hb.node_id.clone()))?;
        let mut out = Vec::new();
        if changed {
            let directives = self
                .sched
                .on_user_activity(&hb.node_id, hb.user_active, &self.cfg.policy)
                .map_err(|_| ManagerError::UnknownNode(hb.node_id.clone()))?;
            out.extend(self.apply_directives(directives));
        }
        out.extend(self.pump());
        Ok(out)
    }

    /// Declares nodes lost whose last heartbeat is older than the loss timeout.
    pub fn reap(&mut self, now: Duration) -> (Vec<NodeId>, Vec<Outbound>) {
        let timeout = self.cfg.loss_timeout();
        let stale: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|(_, r)| now.saturating_sub(r.last_seen) > timeout)
            .map(|(id, _)| id.clone())
            .collect();
        let mut out = Vec::new();
        for id in &stale {
            log::warn!("node {id} missed {} heartbeats", self.cfg.missed_heartbeats);
            out.extend(self.node_lost(id));
        }
        (stale, out)
    }

    /// Forgets a node and returns its tasks to the queue.
    pub fn node_lost(&mut self, node: &NodeId) -> Vec<Outbound> {
        if self.nodes.remove(node).is_none() {
            return Vec::new();
        }
        let directives = self.sched.on_node_lost(node).unwrap_or_default();
        for job in self
            .jobs
            .values_mut()
            .filter(|j| j.phase == JobPhase::Compiling)
        {
            let in_flight = directives
                .iter()
                .filter(|d| matches!(d, Directive::Task { task, .. } if task.job == job.id))
                .count();
            job.losses.push(NodeLoss {
                node: node.clone(),
                committed_at: job.checkpoint.log().len(),
                in_flight,
            });
        }
        let mut out = self.apply_directives(directives);
        out.extend(self.pump());
        out
    }

    fn apply_directives(&mut self, directives: Vec<Directive>) -> Vec<Outbound> {
        let mut out = Vec::new();
        for d in directives {
            match d {
                Directive::Task { task, event } => self.apply_requeueing(&task, &event),
                Directive::DemotePriority(node) => {
                    out.extend(self.set_priority(node, PriorityMode::Lowest))
                }
                Directive::PromotePriority(node) => {
                    out.extend(self.set_priority(node, PriorityMode::RealTime))
                }
            }
        }
        out
    }

    fn set_priority(&mut self, node: NodeId, mode: PriorityMode) -> Option<Outbound> {
        let rec = self.nodes.get_mut(&node)?;
        rec.priority = mode;
        Some(Outbound {
            to: node,
            msg: Message::SetPriority(SetPriority { mode }),
        })
    }

    fn step(&mut self, id: &TaskId, event: &TaskEvent) -> Option<TaskState> {
        let max = self.cfg.max_attempts;
        let job = self.jobs.get_mut(&id.job)?;
        let task = job.tasks.get_mut(&id.tu)?;
        match task.transition(event, max) {
            Ok(step) => {
                if let Some(h) = self.histories.as_mut() {
                    let trail = h.entry(id.clone()).or_default();
                    if let Some(t) = step.transient {
                        trail.push(t);
                    }
                    trail.push(step.task.state);
                }
                *task = step.task;
                Some(task.state)
            }
            Err(e) => {
                log::error!("{id}: {e}");
                None
            }
        }
    }

    /// Applies an event after which the task is either back in the queue or
    /// failed; the slot has already been released.
    fn apply_requeueing(&mut self, id: &TaskId, event: &TaskEvent) {
        match self.step(id, event) {
            Some(TaskState::Pending) => {
                let job = self.jobs.get_mut(&id.job).expect("job of a live task");
                job.counters.requeued += 1;
                let queue = job.queue;
                if let Err(e) = self.sched.enqueue(id.clone(), queue) {
                    log::error!("requeue {id}: {e}");
                }
            }
            Some(TaskState::Failed) => {
                let reason = format!("{} failed after {} attempts", id.tu, self.cfg.max_attempts);
                self.fail_job(&id.job, reason);
            }
            _ => {}
        }
    }

    fn fail_job(&mut self, job_id: &JobId, reason: String) {
        let Some(job) = self.jobs.get_mut(job_id) else {
            return;
        };
        if job.phase != JobPhase::Compiling {
            return;
        }
        log::error!("job {job_id} failed: {reason}");
        job.phase = JobPhase::Failed;
        job.failure = Some(reason);
        self.sched.forget_job(job_id);
        let live: Vec<TuId> = job
            .tasks
            .iter()
            .filter(|(_, t)| !t.state.is_terminal())
            .map(|(tu, _)| tu.clone())
            .collect();
        for tu in live {
            let id = TaskId::new(job_id.clone(), tu);
            self.sched.release(&id);
            self.step(&id, &TaskEvent::Exhausted);
        }
    }

    /// Content-derived, so a resubmission of the same build finds its log.
    pub fn job_id_for(req: &SubmitJob, queue: SchedulingClass) -> JobId {
        let mut fields: Vec<Vec<u8>> = vec![
            req.target.to_string().into_bytes(),
            queue.to_string().into_bytes(),
        ];
        for u in &req.units {
            fields.push(u.tu_id.as_str().as_bytes().to_vec());
            fields.push(u.source_digest.as_str().as_bytes().to_vec());
            fields.push(u.compile_args.join("\0").into_bytes());
        }
        let d = Digest::of_fields(fields.iter().map(Vec::as_slice));
        JobId::new(d.prefix(16)).expect("hex is a valid id")
    }

    pub fn submit_job(
        &mut self,
        req: SubmitJob,
        now: Duration,
    ) -> Result<(JobId, Vec<Outbound>), ManagerError> {
        if req.units.is_empty() {
            return Err(ManagerError::EmptyJob);
        }
        let mut seen = std::collections::HashSet::new();
        for u in &req.units {
            if !seen.insert(&u.tu_id) {
                return Err(ManagerError::BadRequest(format!(
                    "duplicate unit {}",
                    u.tu_id
                )));
            }
            if Digest::of(&u.source) != u.source_digest {
                return Err(ManagerError::BadRequest(format!(
                    "digest mismatch for {}",
                    u.tu_id
                )));
            }
            if !matches!(u.source_ext.as_str(), "i" | "ii") {
                return Err(ManagerError::BadRequest(format!(
                    "unsupported source extension {:?}",
                    u.source_ext
                )));
            }
        }
        let check = version_consistency_check(
            &req.target,
            self.sched.nodes(),
            req.allow_mixed || self.cfg.allow_mixed,
        );
        let pin = match &check {
            VersionCheck::NoEligibleNodes => {
                return Err(ManagerError::NoCompatibleNode(req.target.clone()))
            }
            VersionCheck::Mixed {
                majority,
                offenders,
                allowed: false,
            } => {
                return Err(ManagerError::MixedVersions {
                    target: req.target.clone(),
                    majority: majority.clone(),
                    offenders: offenders.clone(),
                })
            }
            VersionCheck::Mixed { .. } => None,
            VersionCheck::Uniform { version } => Some(version.clone()),
        };
        let cache_toolchain = check
            .majority_version()
            .and_then(|v| ToolchainId::new(req.target.clone(), v).ok());
        let queue = self.cfg.policy.queue_for(req.class);
        let job_id = Self::job_id_for(&req, queue);

        if let Some(job) = self.jobs.get(&job_id) {
            if job.phase != JobPhase::Failed {
                log::info!("job {job_id} resubmitted while {:?}", job.phase);
                return Ok((job_id, Vec::new()));
            }
            self.jobs.remove(&job_id);
        }

        let dir = self.cfg.staging_dir.join(job_id.as_str());
        std::fs::create_dir_all(dir.join("obj"))?;
        let checkpoint = CheckpointFile::open(dir.join("checkpoint.log"), job_id.clone())?;
        let mut units = HashMap::new();
        let mut order = Vec::new();
        for u in req.units {
            let tu = TranslationUnit {
                tu_id: u.tu_id.clone(),
                source_digest: u.source_digest,
                compile_args: u.compile_args,
                target: req.target.clone(),
                est_cost: None,
            };
            order.push(u.tu_id.clone());
            units.insert(
                u.tu_id,
                Unit {
                    tu,
                    source_ext: u.source_ext,
                    source: u.source,
                },
            );
        }
        let plan = checkpoint
            .log()
            .restart_plan(order.iter().map(|t| &units[t].tu));
        let mut job = Job {
            id: job_id.clone(),
            queue,
            order,
            units,
            tasks: BTreeMap::new(),
            toolchains: HashMap::new(),
            cache_toolchain,
            checkpoint,
            dir,
            phase: JobPhase::Compiling,
            counters: JobCounters::default(),
            losses: Vec::new(),
            started: now,
            finished: None,
            failure: None,
        };
        job.counters.restored = (job.order.len() - plan.len()) as u64;
        let restored: Vec<TuId> = job
            .order
            .iter()
            .filter(|t| !plan.contains(t))
            .cloned()
            .collect();
        for tu in restored {
            job.units.remove(&tu);
        }
        log::info!(
            "job {job_id}: {} units, {} restored from checkpoint",
            job.order.len(),
            job.counters.restored
        );
        self.sched
            .register_job(job_id.clone(), req.target.clone(), pin);
        for tu in &plan {
            job.tasks.insert(
                tu.clone(),
                CompileTask::new(TaskId::new(job_id.clone(), tu.clone())),
            );
        }
        self.jobs.insert(job_id.clone(), job);

        for tu in plan {
            let id = TaskId::new(job_id.clone(), tu);
            if self.try_cache(&id)? {
                continue;
            }
            self.sched
                .enqueue(id, queue)
                .map_err(|e| ManagerError::BadRequest(e.to_string()))?;
        }
        self.check_complete(&job_id, now);
        Ok((job_id, self.pump()))
    }

    fn try_cache(&mut self, id: &TaskId) -> Result<bool, ManagerError> {
        let Some(cache) = self.cache.as_mut() else {
            return Ok(false);
        };
        let job = self.jobs.get_mut(&id.job).expect("job exists");
        let Some(tc) = job.cache_toolchain.clone() else {
            return Ok(false);
        };
        let unit = &job.units[&id.tu];
        let key = cache_key(&unit.tu, &tc);
        match cache.lookup(&key)? {
            Lookup::Hit(bytes) => {
                job.counters.cache_hits += 1;
                let digest = Digest::of(&bytes);
                stage_object(&job.object_path(&id.tu), &bytes)?;
                job.checkpoint.commit(
                    id.tu.clone(),
                    digest,
                    NodeId::new("cache").expect("valid id"),
                )?;
                job.units.remove(&id.tu);
                self.step(id, &TaskEvent::CacheHit);
                Ok(true)
            }
            Lookup::Miss | Lookup::Corrupt => {
                job.counters.cache_misses += 1;
                Ok(false)
            }
        }
    }

    fn check_complete(&mut self, job_id: &JobId, now: Duration) {
        let Some(job) = self.jobs.get_mut(job_id) else {
            return;
        };
        if job.phase == JobPhase::Compiling && job.checkpoint.log().len() >= job.order.len() {
            job.phase = JobPhase::Complete;
            job.finished = Some(now);
            job.units.clear();
            self.sched.forget_job(job_id);
            log::info!("job {job_id} complete");
        }
    }

    /// Allocates free slots to queued tasks and emits the offers.
    pub fn pump(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        while let Some(a) = self.sched.allocate_next(&self.cfg.policy) {
            let event = TaskEvent::Offer {
                node: a.node.clone(),
                slot: a.slot,
            };
            if self.step(&a.task, &event).is_none() {
                self.sched.release(&a.task);
                continue;
            }
            let job = self
                .jobs
                .get_mut(&a.task.job)
                .expect("job of a queued task");
            job.counters.dispatched += 1;
            job.toolchains
                .insert(a.task.tu.clone(), a.toolchain.clone());
            let attempt = job.tasks[&a.task.tu].attempts + 1;
            let unit = &job.units[&a.task.tu];
            out.push(Outbound {
                to: a.node,
                msg: Message::ExecuteTask(ExecuteTask {
                    job_id: a.task.job.clone(),
                    tu_id: a.task.tu.clone(),
                    toolchain: a.toolchain,
                    compile_args: unit.tu.compile_args.clone(),
                    source_ext: unit.source_ext.clone(),
                    source: unit.source.clone(),
                    attempt,
                }),
            });
        }
        out
    }

    fn held_by(&self, node: &NodeId, id: &TaskId, state: TaskState) -> bool {
        self.task(id)
            .is_some_and(|t| t.state == state && t.assigned_node.as_ref() == Some(node))
    }

    pub fn offer_reply(&mut self, node: &NodeId, reply: &OfferReply) -> Vec<Outbound> {
        let id = TaskId::new(reply.job_id.clone(), reply.tu_id.clone());
        if !self.held_by(node, &id, TaskState::Assigned) {
            log::debug!("stale offer reply for {id} from {node}");
            return Vec::new();
        }
        if reply.accepted {
            self.step(&id, &TaskEvent::Start);
            if let Err(e) = self.sched.mark_started(&id) {
                log::error!("{id}: {e}");
            }
            Vec::new()
        } else {
            self.sched.release(&id);
            self.apply_requeueing(&id, &TaskEvent::OfferDeclined);
            self.pump()
        }
    }

    /// Handles a daemon's result. The object is staged and its checkpoint
    /// record is on disk before this returns.
    pub fn task_result(
        &mut self,
        node: &NodeId,
        res: TaskResult,
        now: Duration,
    ) -> Result<Vec<Outbound>, ManagerError> {
        let id = TaskId::new(res.job_id.clone(), res.tu_id.clone());
        if !self.held_by(node, &id, TaskState::Running) {
            log::debug!("ignoring result for {id} from {node}: not running there");
            return Ok(Vec::new());
        }
        self.sched.release(&id);
        let error = match res.outcome {
            TaskOutcome::Object { digest, object } => {
                if object.len() > MAX_OBJECT_BYTES {
                    Some(format!("object of {} bytes exceeds limit", object.len()))
                } else if Digest::of(&object) != digest {
                    Some("object digest mismatch".to_owned())
                } else {
                    self.accept_object(node, &id, digest, &object)?;
                    None
                }
            }
            TaskOutcome::Error { exit_code, stderr } => Some(format!(
                "exit {exit_code:?}: {}",
                stderr.lines().next().unwrap_or("")
            )),
        };
        if let Some(msg) = error {
            log::warn!("{id} on {node}: {msg}");
            self.apply_requeueing(&id, &TaskEvent::ExecError);
            if let Some(job) = self.jobs.get_mut(&id.job) {
                if job.phase == JobPhase::Failed {
                    job.failure = Some(format!("{}: {msg}", id.tu));
                }
            }
        }
        self.check_complete(&id.job, now);
        Ok(self.pump())
    }

    fn accept_object(
        &mut self,
        node: &NodeId,
        id: &TaskId,
        digest: Digest,
        object: &[u8],
    ) -> Result<(), ManagerError> {
        let job = self.jobs.get_mut(&id.job).expect("job of a running task");
        match job.checkpoint.log().get(&id.tu) {
            Some(e) if e.object_digest != digest => {
                log::warn!(
                    "{id}: keeping committed object {}, discarding {digest}",
                    e.object_digest
                );
            }
            Some(_) => {}
            None => {
                stage_object(&job.object_path(&id.tu), object)?;
                if let Commit::Appended { stamp } =
                    job.checkpoint.commit(id.tu.clone(), digest, node.clone())?
                {
                    log::debug!("{id} committed at {stamp}");
                }
            }
        }
        job.counters.executed_ok += 1;
        if let (Some(cache), Some(tc), Some(unit)) = (
            self.cache.as_mut(),
            job.toolchains.get(&id.tu),
            job.units.get(&id.tu),
        ) {
            let key = cache_key(&unit.tu, tc);
            if let Err(e) = cache.store(&key, &unit.tu, tc, object) {
                log::warn!("cache store for {id}: {e}");
            }
        }
        job.units.remove(&id.tu);
        self.step(id, &TaskEvent::Complete);
        Ok(())
    }

    pub fn job_status(&self, job_id: &JobId, now: Duration) -> Result<JobStatus, ManagerError> {
        let job = self
            .jobs
            .get(job_id)
            .ok_or_else(|| ManagerError::UnknownJob(job_id.clone()))?;
        let mut counts: BTreeMap<TaskState, usize> =
            TaskState::ALL.iter().map(|s| (*s, 0)).collect();
        for t in job.tasks.values() {
            *counts.get_mut(&t.state).expect("all states present") += 1;
        }
        *counts.get_mut(&TaskState::Finished).expect("present") +=
            job.order.len() - job.tasks.len();
        let committed = job.checkpoint.log().len();
        let total = job.order.len();
        Ok(JobStatus {
            job_id: job_id.clone(),
            phase: job.phase,
            total,
            committed,
            counts,
            percent_complete: 100.0 * committed as f64 / total as f64,
            elapsed_ms: job
                .finished
                .unwrap_or(now)
                .saturating_sub(job.started)
                .as_millis() as u64,
            counters: job.counters.clone(),
            node_losses: job.losses.clone(),
            failure: job.failure.clone(),
        })
    }

    /// Returns a committed object, verified against its checkpoint digest.
    pub fn fetch_object(&self, job_id: &JobId, tu: &TuId) -> Result<Vec<u8>, ManagerError> {
        let job = self
            .jobs
            .get(job_id)
            .ok_or_else(|| ManagerError::UnknownJob(job_id.clone()))?;
        let entry = job
            .checkpoint
            .log()
            .get(tu)
            .ok_or_else(|| ManagerError::NotReady {
                job: job_id.clone(),
                tu: tu.clone(),
            })?;
        let bytes = std::fs::read(job.object_path(tu))?;
        if Digest::of(&bytes) != entry.object_digest {
            return Err(ManagerError::Io(io::Error::new(
                io::ErrorKind::InvalidData,
                "staged object corrupted",
            )));
        }
        Ok(bytes)
    }

    /// Verifies scheduler and task bookkeeping agree.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.sched.check_invariants()?;
        for job in self.jobs.values() {
            for t in job.tasks.values() {
                if t.attempts > self.cfg.max_attempts {
                    return Err(format!("{}: {} attempts", t.id, t.attempts));
                }
                let slot = self.sched.slot_of(&t.id);
                match t.state {
                    TaskState::Assigned | TaskState::Running => {
                        let (n, s) =
                            slot.ok_or_else(|| format!("{} {:?} without a slot", t.id, t.state))?;
                        if t.assigned_node.as_ref() != Some(n) || t.assigned_slot != Some(s) {
                            return Err(format!("{} slot mismatch", t.id));
                        }
                    }
                    TaskState::Pending => {
                        if job.phase == JobPhase::Compiling && !self.sched.is_queued(&t.id) {
                            return Err(format!("{} pending but not queued", t.id));
                        }
                    }
                    _ => {
                        if slot.is_some() || self.sched.is_queued(&t.id) {
                            return Err(format!("{} {:?} still scheduled", t.id, t.state));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn stage_object(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().expect("object paths have a parent");
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    io::Write::write_all(&mut tmp, bytes)?;
    tmp.as_file().sync_data()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
