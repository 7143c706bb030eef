use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use crate::scheduler::{Directive, PolicyConfig, SchedulerState};
use crate::task::{transition, CompileTask, TaskEvent, TaskState};
use crate::types::{JobId, NodeDescriptor, NodeId, SchedulingClass, TargetTriple, TaskId, TuId};
use crate::xmapper::ToolchainId;

use super::report::{Breakdown, BusyInterval, NodeTimeline, Report};
use super::scenario::{Scenario, Trace};
use super::SimError;

const SIM_TARGET: &str = "x86_64-linux-gnu";
const SIM_VERSION: &str = "sim";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Sched,
    Input,
    Compute,
    Output,
}

#[derive(Debug, Clone)]
struct Run {
    node: usize,
    slot: usize,
    phase: Phase,
    phase_start: f64,
    slot_start: f64,
    work: f64,
    remaining: f64,
    rate: f64,
    last: f64,
}

#[derive(Debug)]
struct TaskRt {
    task: CompileTask,
    cost: f64,
    input_bytes: f64,
    output_bytes: f64,
    epoch: u64,
    run: Option<Run>,
}

#[derive(Debug)]
struct NodeRt {
    id: NodeId,
    speed: f64,
    cpus: u32,
    class: SchedulingClass,
    link_free: f64,
    active: bool,
    demoted: bool,
    alive: bool,
    trace: Option<Trace>,
    phase: f64,
    intervals: Vec<BusyInterval>,
}

#[derive(Debug, Clone, Copy)]
enum EvKind {
    Phase { task: usize, epoch: u64 },
    Activity { node: usize, active: bool },
    PeriodicEdge { node: usize },
    Fault { node: usize },
}

#[derive(Debug)]
struct Ev {
    t: f64,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ev {
    // Reversed: BinaryHeap pops the earliest event first.
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

/// Options for a single run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Check scheduler invariants, slot conservation and saturation after
    /// every event.
    pub check_invariants: bool,
}

pub fn run_scenario(sc: &Scenario) -> Result<Report, SimError> {
    run_with(sc, RunOptions::default())
}

pub fn run_with(sc: &Scenario, opts: RunOptions) -> Result<Report, SimError> {
    sc.validate()?;
    Sim::new(sc, opts)?.run()
}

struct Sim<'a> {
    sc: &'a Scenario,
    cfg: PolicyConfig,
    opts: RunOptions,
    sched: SchedulerState,
    queue: SchedulingClass,
    tasks: Vec<TaskRt>,
    by_id: BTreeMap<TaskId, usize>,
    nodes: Vec<NodeRt>,
    node_index: BTreeMap<NodeId, usize>,
    heap: BinaryHeap<Ev>,
    seq: u64,
    now: f64,
    done: usize,
    report: Report,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, opts: RunOptions) -> Result<Self, SimError> {
        let cfg = sc.policy.clone();
        let target: TargetTriple = SIM_TARGET.parse().expect("static triple");
        let toolchain = ToolchainId::new(target.clone(), SIM_VERSION).expect("static toolchain");
        let job = JobId::new("sim").expect("static id");
        let mut sched = SchedulerState::new();
        sched.register_job(job.clone(), target, None);

        let phases = sc.trace_phases();
        let mut nodes = Vec::new();
        let mut node_index = BTreeMap::new();
        for (i, n) in sc.nodes.iter().enumerate() {
            let id = NodeId::new(format!("n{i:03}")).expect("generated id");
            let cpus = if sc.distcc_mode { 1 } else { n.cpus };
            let desc = NodeDescriptor {
                node_id: id.clone(),
                cpu_count: cpus,
                os_family: "linux".into(),
                cpu_arch: "x86_64".into(),
                toolchains: [toolchain.clone()].into(),
                load: 0.0,
                user_active: false,
                scheduling_class: n.class,
            };
            // Nodes the policy excludes never join the fleet.
            let alive = sched.add_node(desc, &cfg).is_ok();
            node_index.insert(id.clone(), i);
            nodes.push(NodeRt {
                id,
                speed: n.speed,
                cpus,
                class: n.class,
                link_free: 0.0,
                active: false,
                demoted: false,
                alive,
                trace: n.trace.clone(),
                phase: phases[i],
                intervals: Vec::new(),
            });
        }

        let queue = cfg.queue_for(None);
        let mut tasks = Vec::new();
        let mut by_id = BTreeMap::new();
        let mut report = Report::empty(&sc.name);
        for (i, (cost, input_bytes, output_bytes, redundant)) in
            sc.workload().into_iter().enumerate()
        {
            let id = TaskId::new(
                job.clone(),
                TuId::new(format!("tu{i:05}")).expect("generated id"),
            );
            let mut task = CompileTask::new(id.clone());
            if redundant {
                task = step(&task, &TaskEvent::CacheHit, sc.max_attempts)?.task;
                report.cache_hits += 1;
            } else {
                sched
                    .enqueue(id.clone(), queue)
                    .map_err(|e| SimError::Internal(e.to_string()))?;
            }
            by_id.insert(id, i);
            tasks.push(TaskRt {
                task,
                cost,
                input_bytes,
                output_bytes,
                epoch: 0,
                run: None,
            });
        }
        let done = report.cache_hits;
        Ok(Sim {
            sc,
            cfg,
            opts,
            sched,
            queue,
            tasks,
            by_id,
            nodes,
            node_index,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            done,
            report,
        })
    }

    fn push(&mut self, t: f64, kind: EvKind) {
        self.seq += 1;
        self.heap.push(Ev {
            t,
            seq: self.seq,
            kind,
        });
    }

    fn run(mut self) -> Result<Report, SimError> {
        for i in 0..self.nodes.len() {
            if !self.nodes[i].alive {
                continue;
            }
            match self.nodes[i].trace.clone() {
                Some(Trace::Steps(steps)) => {
                    for (t, active) in steps {
                        self.push(t, EvKind::Activity { node: i, active });
                    }
                }
                Some(Trace::Periodic { .. }) => {
                    if self.periodic_active(i, 0.0) {
                        self.push(
                            0.0,
                            EvKind::Activity {
                                node: i,
                                active: true,
                            },
                        );
                    }
                    if let Some(t) = self.next_edge(i, 0.0) {
                        self.push(t, EvKind::PeriodicEdge { node: i });
                    }
                }
                None => {}
            }
        }
        for f in self.sc.faults.clone() {
            self.push(f.at, EvKind::Fault { node: f.node });
        }
        self.pump()?;
        self.check()?;

        while self.done < self.tasks.len() {
            let Some(ev) = self.heap.pop() else {
                return Err(SimError::Stalled {
                    at: self.now,
                    unfinished: self.tasks.len() - self.done,
                });
            };
            self.now = ev.t;
            self.report.events += 1;
            match ev.kind {
                EvKind::Phase { task, epoch } => {
                    if self.tasks[task].epoch == epoch {
                        self.advance(task)?;
                    }
                }
                EvKind::Activity { node, active } => self.activity(node, active)?,
                EvKind::PeriodicEdge { node } => {
                    let active = self.periodic_active(node, self.now);
                    if let Some(t) = self.next_edge(node, self.now) {
                        self.push(t, EvKind::PeriodicEdge { node });
                    }
                    self.activity(node, active)?;
                }
                EvKind::Fault { node } => self.fault(node)?,
            }
            self.pump()?;
            self.check()?;
            if !self.nodes.iter().any(|n| n.alive) && self.done < self.tasks.len() {
                return Err(SimError::Stalled {
                    at: self.now,
                    unfinished: self.tasks.len() - self.done,
                });
            }
        }
        Ok(self.finish())
    }

    fn periodic_active(&self, node: usize, t: f64) -> bool {
        match self.nodes[node].trace {
            Some(Trace::Periodic { period, duty }) => {
                (t - self.nodes[node].phase).rem_euclid(period) < duty * period
            }
            _ => false,
        }
    }

    fn next_edge(&self, node: usize, t: f64) -> Option<f64> {
        let Some(Trace::Periodic { period, duty }) = self.nodes[node].trace else {
            return None;
        };
        if duty <= 0.0 || duty >= 1.0 {
            return None;
        }
        let phase = self.nodes[node].phase;
        let k = ((t - phase) / period).floor();
        (0..3)
            .flat_map(|j| {
                let start = phase + (k + j as f64) * period;
                [start, start + duty * period]
            })
            .filter(|&e| e > t)
            .min_by(f64::total_cmp)
    }

    fn apply(&mut self, idx: usize, event: &TaskEvent) -> Result<(), SimError> {
        let s = step(&self.tasks[idx].task, event, self.sc.max_attempts)?;
        let state = s.task.state;
        self.tasks[idx].task = s.task;
        match state {
            TaskState::Pending if s.transient.is_some() || matches!(event, TaskEvent::NodeLost) => {
                self.report.requeues += 1;
                let id = self.tasks[idx].task.id.clone();
                self.sched
                    .enqueue(id, self.queue)
                    .map_err(|e| SimError::Internal(e.to_string()))?;
            }
            TaskState::Failed => {
                self.report.failed_tasks += 1;
                self.done += 1;
            }
            TaskState::Finished => self.done += 1,
            _ => {}
        }
        Ok(())
    }

    fn pump(&mut self) -> Result<(), SimError> {
        while let Some(a) = self.sched.allocate_next(&self.cfg) {
            let idx = self.by_id[&a.task];
            let node = self.node_index[&a.node];
            self.apply(
                idx,
                &TaskEvent::Offer {
                    node: a.node.clone(),
                    slot: a.slot,
                },
            )?;
            self.apply(idx, &TaskEvent::Start)?;
            self.sched
                .mark_started(&a.task)
                .map_err(|e| SimError::Internal(e.to_string()))?;
            self.report.dispatches += 1;
            let t = &mut self.tasks[idx];
            t.epoch += 1;
            let work = t.cost * self.sc.virtualization_overhead;
            t.run = Some(Run {
                node,
                slot: a.slot,
                phase: Phase::Sched,
                phase_start: self.now,
                slot_start: self.now,
                work,
                remaining: work,
                rate: 0.0,
                last: self.now,
            });
            let epoch = t.epoch;
            self.push(
                self.now + self.sc.dispatch_overhead,
                EvKind::Phase { task: idx, epoch },
            );
        }
        Ok(())
    }

    fn account(&mut self, phase: Phase, span: f64) {
        let b = &mut self.report.totals;
        match phase {
            Phase::Sched => b.scheduling += span,
            Phase::Input | Phase::Output => b.network += span,
            Phase::Compute => b.compute += span,
        }
    }

    fn transfer(&mut self, node: usize, bytes: f64) -> f64 {
        let minutes = bytes * 8.0 / (self.sc.bandwidth_mbps * 1e6) / 60.0;
        let n = &mut self.nodes[node];
        let start = n.link_free.max(self.now);
        n.link_free = start + minutes;
        n.link_free
    }

    fn advance(&mut self, idx: usize) -> Result<(), SimError> {
        let now = self.now;
        let mut run = self.tasks[idx]
            .run
            .take()
            .expect("phase event for a running task");
        self.account(run.phase, now - run.phase_start);
        run.phase_start = now;
        let epoch = self.tasks[idx].epoch;
        match run.phase {
            Phase::Sched => {
                run.phase = Phase::Input;
                let end = self.transfer(run.node, self.tasks[idx].input_bytes);
                self.push(end, EvKind::Phase { task: idx, epoch });
            }
            Phase::Input => {
                let n = &self.nodes[run.node];
                run.phase = Phase::Compute;
                run.rate = n.speed * if n.demoted { self.sc.demoted_rate } else { 1.0 };
                run.last = now;
                self.push(
                    now + run.remaining / run.rate,
                    EvKind::Phase { task: idx, epoch },
                );
            }
            Phase::Compute => {
                self.report.compute_work += run.work;
                run.phase = Phase::Output;
                let end = self.transfer(run.node, self.tasks[idx].output_bytes);
                self.push(end, EvKind::Phase { task: idx, epoch });
            }
            Phase::Output => {
                self.close_interval(&run, idx, true);
                self.sched.release(&self.tasks[idx].task.id);
                self.apply(idx, &TaskEvent::Complete)?;
                self.report.makespan = self.report.makespan.max(now);
                return Ok(());
            }
        }
        self.tasks[idx].run = Some(run);
        Ok(())
    }

    fn close_interval(&mut self, run: &Run, tu: usize, completed: bool) {
        let span = self.now - run.slot_start;
        if completed {
            self.report.max_task_duration = self.report.max_task_duration.max(span);
        }
        self.nodes[run.node].intervals.push(BusyInterval {
            slot: run.slot,
            start: run.slot_start,
            end: self.now,
            tu,
            completed,
        });
    }

    /// Ends a run early; work already done is discarded.
    fn abort(&mut self, idx: usize) {
        let t = &mut self.tasks[idx];
        t.epoch += 1;
        let Some(run) = t.run.take() else { return };
        self.account(run.phase, self.now - run.phase_start);
        let done = match run.phase {
            Phase::Compute => run.work - (run.remaining - (self.now - run.last) * run.rate),
            Phase::Output => run.work,
            _ => 0.0,
        };
        if run.phase == Phase::Output {
            self.report.compute_work -= run.work;
        }
        self.report.discarded_work += done;
        self.close_interval(&run, idx, false);
    }

    fn directives(&mut self, ds: Vec<Directive>) -> Result<(), SimError> {
        for d in ds {
            match d {
                Directive::DemotePriority(n) => self.set_demoted(self.node_index[&n], true),
                Directive::PromotePriority(n) => self.set_demoted(self.node_index[&n], false),
                Directive::Task { task, event } => {
                    let idx = self.by_id[&task];
                    self.abort(idx);
                    if matches!(event, TaskEvent::UserAccessBreak | TaskEvent::OfferDeclined) {
                        self.report.stops += 1;
                    }
                    self.apply(idx, &event)?;
                }
            }
        }
        Ok(())
    }

    fn activity(&mut self, node: usize, active: bool) -> Result<(), SimError> {
        let n = &mut self.nodes[node];
        if !n.alive || n.active == active {
            return Ok(());
        }
        n.active = active;
        let load = if active {
            self.sc.nodes[node].busy_load
        } else {
            0.0
        };
        let id = n.id.clone();
        let internal = |e: crate::scheduler::SchedulerError| SimError::Internal(e.to_string());
        self.sched.set_load(&id, load).map_err(internal)?;
        let ds = self
            .sched
            .on_user_activity(&id, active, &self.cfg)
            .map_err(internal)?;
        self.directives(ds)
    }

    fn fault(&mut self, node: usize) -> Result<(), SimError> {
        if !self.nodes[node].alive {
            return Ok(());
        }
        self.nodes[node].alive = false;
        self.report.node_losses += 1;
        let id = self.nodes[node].id.clone();
        let ds = self
            .sched
            .on_node_lost(&id)
            .map_err(|e| SimError::Internal(e.to_string()))?;
        self.directives(ds)
    }

    fn set_demoted(&mut self, node: usize, demoted: bool) {
        if self.nodes[node].demoted == demoted {
            return;
        }
        self.nodes[node].demoted = demoted;
        let rate = self.nodes[node].speed * if demoted { self.sc.demoted_rate } else { 1.0 };
        let now = self.now;
        let mut resched = Vec::new();
        for (i, t) in self.tasks.iter_mut().enumerate() {
            let Some(run) = t.run.as_mut() else { continue };
            if run.node != node || run.phase != Phase::Compute {
                continue;
            }
            run.remaining = (run.remaining - (now - run.last) * run.rate).max(0.0);
            run.last = now;
            run.rate = rate;
            t.epoch += 1;
            resched.push((now + run.remaining / rate, i, t.epoch));
        }
        for (at, task, epoch) in resched {
            self.push(at, EvKind::Phase { task, epoch });
        }
    }

    fn check(&self) -> Result<(), SimError> {
        if !self.opts.check_invariants {
            return Ok(());
        }
        let fail = |m: String| {
            Err(SimError::Invariant {
                at: self.now,
                detail: m,
            })
        };
        if let Err(e) = self.sched.check_invariants() {
            return fail(e);
        }
        let mut running = 0;
        for n in self.nodes.iter().filter(|n| n.alive) {
            let slots = self.sched.slots(&n.id).expect("alive nodes are registered");
            if slots.len() != n.cpus as usize {
                return fail(format!(
                    "{} exposes {} slots for {} cpus",
                    n.id,
                    slots.len(),
                    n.cpus
                ));
            }
            let used = slots.iter().flatten().count();
            running += used;
            let eligible = match (self.queue, n.class) {
                (SchedulingClass::Dedicated, SchedulingClass::Shared) => false,
                (_, SchedulingClass::Dedicated) => true,
                (_, SchedulingClass::Shared) => {
                    let load = if n.active {
                        self.sc.nodes[self.node_index[&n.id]].busy_load
                    } else {
                        0.0
                    };
                    load < self.cfg.load_reject_threshold
                        && !(self.cfg.stop_on_user_access && n.active)
                }
            };
            if eligible && self.sched.queued_len() > 0 && used < slots.len() {
                return fail(format!("{} has a free slot while work is queued", n.id));
            }
        }
        let holding = self.tasks.iter().filter(|t| t.run.is_some()).count();
        if running != holding {
            return fail(format!(
                "{running} occupied slots but {holding} runs in flight"
            ));
        }
        Ok(())
    }

    fn finish(mut self) -> Report {
        let t = &self.report.totals;
        let sum = t.network + t.compute + t.scheduling;
        self.report.breakdown = if sum > 0.0 {
            Breakdown {
                network: t.network / sum,
                compute: t.compute / sum,
                scheduling: t.scheduling / sum,
            }
        } else {
            Breakdown {
                network: 0.0,
                compute: 1.0,
                scheduling: 0.0,
            }
        };
        self.report.timelines = self
            .nodes
            .into_iter()
            .map(|n| NodeTimeline {
                node: n.id.to_string(),
                slots: n.cpus,
                intervals: n.intervals,
            })
            .collect();
        self.report
    }
}

fn step(task: &CompileTask, event: &TaskEvent, max: u32) -> Result<crate::task::Step, SimError> {
    transition(task, event, max).map_err(|e| SimError::Internal(e.to_string()))
}
