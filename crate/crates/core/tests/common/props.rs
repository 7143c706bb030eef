//! Property suites shared by the property tests and the acceptance run.
#![allow(dead_code)]

use std::path::Path;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use distcom::checkpoint::{CheckpointFile, CheckpointLog};
use distcom::daemon::{select_priority, PriorityState, RecordingPriority};
use distcom::scheduler::{Directive, PolicyConfig, SchedulerState};
use distcom::simnet::{self, Axis, Dist, Fault, RunOptions, Scenario, SimNode, Trace};
use distcom::task::{transition, CompileTask, TaskEvent, TaskState};
use distcom::wire::PriorityMode;
use distcom::{
    Digest, JobId, NodeDescriptor, NodeId, Policy, SchedulingClass, TaskId, ToolchainId, TuId,
};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn report<T: std::fmt::Debug>(
    r: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

// ---- task state machine -------------------------------------------------

const MAX: u32 = 3;

fn event(i: u8) -> TaskEvent {
    match i {
        0 => TaskEvent::Offer {
            node: NodeId::new("n").unwrap(),
            slot: 1,
        },
        1 => TaskEvent::OfferDeclined,
        2 => TaskEvent::Start,
        3 => TaskEvent::Complete,
        4 => TaskEvent::UserAccessBreak,
        5 => TaskEvent::NodeLost,
        6 => TaskEvent::ExecError,
        7 => TaskEvent::Exhausted,
        _ => TaskEvent::CacheHit,
    }
}

/// Reference model: `(state, attempts, transient)` after event `e`, or
/// `None` when the event is illegal.
fn model(state: TaskState, attempts: u32, e: u8) -> Option<(TaskState, u32, Option<TaskState>)> {
    use TaskState::*;
    let charge = || {
        if attempts >= MAX {
            (Failed, attempts, None)
        } else {
            (Pending, attempts + 1, None)
        }
    };
    Some(match (state, e) {
        (Finished | Failed, _) => return None,
        (_, 7) => (Failed, attempts, None),
        (Pending, 0) => (Assigned, attempts, None),
        (Pending, 8) => (Finished, attempts, None),
        (Assigned, 1) => (Pending, attempts, Some(Rejected)),
        (Assigned, 2) => (Running, attempts, None),
        (Assigned, 5) => charge(),
        (Running, 3) => (Finished, attempts, None),
        (Running, 4) => (Pending, attempts, Some(Stopped)),
        (Running, 5 | 6) => charge(),
        _ => return None,
    })
}

/// Safety against the reference model and terminality under a fair driver.
pub fn state_machine(cases: u32) -> Result<(), String> {
    let id = TaskId::new(JobId::new("j").unwrap(), TuId::new("t").unwrap());
    report(
        runner(cases).run(&prop::collection::vec(0u8..9, 1..32), |events| {
            let mut t = CompileTask::new(id.clone());
            for &e in &events {
                let got = transition(&t, &event(e), MAX);
                match (model(t.state, t.attempts, e), got) {
                    (None, Err(_)) => {}
                    (Some((state, attempts, transient)), Ok(step)) => {
                        prop_assert_eq!(step.task.state, state);
                        prop_assert_eq!(step.task.attempts, attempts);
                        prop_assert_eq!(step.transient, transient);
                        t = step.task;
                    }
                    (m, g) => {
                        return Err(TestCaseError::fail(format!(
                            "event {e} in {:?}: model {m:?}, got {g:?}",
                            t.state
                        )))
                    }
                }
                prop_assert_eq!(t.state.holds_slot(), t.assigned_node.is_some());
                prop_assert_eq!(t.assigned_node.is_some(), t.assigned_slot.is_some());
                prop_assert!(t.attempts <= MAX);
            }
            for _ in 0..3 {
                let e = match t.state {
                    TaskState::Pending => 0,
                    TaskState::Assigned => 2,
                    TaskState::Running => 3,
                    _ => break,
                };
                t = transition(&t, &event(e), MAX)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?
                    .task;
            }
            prop_assert!(t.state.is_terminal(), "driver left task in {:?}", t.state);
            Ok(())
        }),
    )
}

// ---- priority -----------------------------------------------------------

/// Daemon priority selection and scheduler reactions for every combination
/// of class, user presence and stop policy.
pub fn priority_truth_table() -> Result<(), String> {
    use PriorityMode::*;
    use SchedulingClass::*;
    let tc = ToolchainId::new("x86_64-linux-gnu".parse().unwrap(), "1").unwrap();
    let job = JobId::new("j").unwrap();
    for class in [Dedicated, Shared] {
        for active in [false, true] {
            let want = if class == Shared && active {
                Lowest
            } else {
                RealTime
            };
            if select_priority(active, class) != want {
                return Err(format!("select_priority({active}, {class}) != {want:?}"));
            }
            for stop in [false, true] {
                let mut cfg = PolicyConfig::with_policy(Policy::Hybrid);
                cfg.stop_on_user_access = stop;
                let mut s = SchedulerState::new();
                let node = NodeId::new("n").unwrap();
                let desc = NodeDescriptor {
                    node_id: node.clone(),
                    cpu_count: 1,
                    os_family: "linux".into(),
                    cpu_arch: "x86_64".into(),
                    toolchains: [tc.clone()].into(),
                    load: 0.0,
                    user_active: false,
                    scheduling_class: class,
                };
                s.add_node(desc, &cfg).unwrap();
                s.register_job(job.clone(), tc.target().clone(), None);
                let task = TaskId::new(job.clone(), TuId::new("t").unwrap());
                s.enqueue(task.clone(), SchedulingClass::Shared).unwrap();
                s.allocate_next(&cfg).unwrap();
                s.mark_started(&task).unwrap();
                let got = s.on_user_activity(&node, active, &cfg).unwrap();
                let want: Vec<Directive> = match (class, active, stop) {
                    (Dedicated, _, _) => vec![],
                    (Shared, false, _) => vec![Directive::PromotePriority(node.clone())],
                    (Shared, true, false) => vec![Directive::DemotePriority(node.clone())],
                    (Shared, true, true) => vec![Directive::Task {
                        task: task.clone(),
                        event: TaskEvent::UserAccessBreak,
                    }],
                };
                if got != want {
                    return Err(format!(
                        "{class}/active={active}/stop={stop}: {got:?} != {want:?}"
                    ));
                }
            }
        }
    }
    // Mode changes reach every attached compiler, and only changes do.
    let rec = RecordingPriority::default();
    let st = PriorityState::new(Box::new(rec.clone()));
    st.attach(10);
    st.attach(11);
    for m in [Lowest, Lowest, RealTime, Lowest] {
        st.set_mode(m);
    }
    st.detach(10);
    st.set_mode(RealTime);
    let want = vec![
        (10, RealTime),
        (11, RealTime),
        (10, Lowest),
        (11, Lowest),
        (10, RealTime),
        (11, RealTime),
        (10, Lowest),
        (11, Lowest),
        (11, RealTime),
    ];
    if rec.calls() != want {
        return Err(format!("priority calls {:?}", rec.calls()));
    }
    Ok(())
}

// ---- simulator ------------------------------------------------------------

fn arb_trace() -> impl Strategy<Value = Option<Trace>> {
    prop_oneof![
        Just(None),
        prop::collection::vec((0.1f64..20.0, any::<bool>()), 1..5).prop_map(|mut v| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.dedup_by(|a, b| a.0 == b.0);
            Some(Trace::Steps(v))
        }),
        (1.0f64..10.0, 0.0f64..1.0)
            .prop_map(|(period, duty)| Some(Trace::Periodic { period, duty })),
    ]
}

fn arb_node() -> impl Strategy<Value = SimNode> {
    (
        1u32..5,
        0.5f64..2.0,
        any::<bool>(),
        arb_trace(),
        0.0f64..1.0,
    )
        .prop_map(|(cpus, speed, shared, trace, busy_load)| SimNode {
            cpus,
            speed,
            class: if shared {
                SchedulingClass::Shared
            } else {
                SchedulingClass::Dedicated
            },
            trace,
            busy_load,
        })
}

/// Random fleets in which node 0 is always an idle dedicated machine.
pub fn arb_scenario() -> impl Strategy<Value = Scenario> {
    (
        prop::collection::vec(arb_node(), 0..5),
        1usize..80,
        prop_oneof![
            (0.1f64..3.0).prop_map(Dist::Constant),
            (0.1f64..3.0, 0.0f64..1.0).prop_map(|(mean, sigma)| Dist::LogNormal { mean, sigma })
        ],
        (0.0f64..4e6, 0.0f64..0.2),
        (0u8..3, any::<bool>(), 0.0f64..0.5, 1.0f64..1.5),
        prop::option::of((0usize..5, 0.0f64..20.0)),
        any::<u64>(),
    )
        .prop_map(
            |(rest, tus, cost, (bytes, dispatch), (p, stop, redundancy, virt), fault, seed)| {
                let mut sc = Scenario::uniform("prop", 1, 2, tus, cost);
                sc.nodes.extend(rest);
                sc.input_bytes = Dist::Constant(bytes);
                sc.output_bytes = Dist::Constant(bytes / 4.0);
                sc.dispatch_overhead = dispatch;
                sc.policy = PolicyConfig::with_policy(
                    [Policy::DedicatedOnly, Policy::SharedAllowed, Policy::Hybrid][p as usize],
                );
                sc.policy.stop_on_user_access = stop;
                sc.cache_redundancy = redundancy;
                sc.virtualization_overhead = virt;
                if let Some((n, at)) = fault {
                    if n >= 1 && n < sc.nodes.len() {
                        sc.faults.push(Fault { node: n, at });
                    }
                }
                sc.seed = seed;
                sc
            },
        )
}

/// Checked-mode runs (scheduler invariants, slot conservation and
/// saturation after every event) plus timeline and work accounting.
pub fn slot_conservation(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&arb_scenario(), |sc| {
        let r = simnet::run_with(
            &sc,
            RunOptions {
                check_invariants: true,
            },
        )
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let eps = 1e-9 * (1.0 + r.makespan);
        let mut busy = 0.0;
        let mut slots = 0.0;
        for t in &r.timelines {
            for s in 0..t.slots as usize {
                let mut iv: Vec<_> = t.intervals.iter().filter(|i| i.slot == s).collect();
                iv.sort_by(|a, b| a.start.total_cmp(&b.start));
                for w in iv.windows(2) {
                    prop_assert!(
                        w[0].end <= w[1].start + eps,
                        "overlap on {} slot {s}",
                        t.node
                    );
                }
                prop_assert!(iv
                    .iter()
                    .all(|i| i.start >= 0.0 && i.end <= r.makespan + eps));
            }
            busy += t.busy_time();
            slots += t.slots as f64;
        }
        let idle = slots * r.makespan - busy;
        prop_assert!(idle >= -eps * slots);
        prop_assert!((busy + idle - slots * r.makespan).abs() <= eps * slots);

        let work = sc.workload();
        let finished = r
            .timelines
            .iter()
            .flat_map(|t| &t.intervals)
            .filter(|i| i.completed)
            .count();
        prop_assert_eq!(finished, work.iter().filter(|w| !w.3).count());
        prop_assert_eq!(r.cache_hits, work.iter().filter(|w| w.3).count());
        let nominal: f64 = work
            .iter()
            .filter(|w| !w.3)
            .map(|w| w.0 * sc.virtualization_overhead)
            .sum();
        prop_assert!((r.compute_work - nominal).abs() <= 1e-6 * (1.0 + nominal));
        prop_assert!((r.breakdown.sum() - 1.0).abs() <= 1e-9);
        prop_assert!(r.makespan + eps >= r.max_task_duration);
        Ok(())
    }))
}

/// Identical scenarios give byte-identical sweep CSV.
pub fn sim_determinism() -> Result<(), String> {
    let sc = Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/office.scn"))
        .map_err(|e| e.to_string())?;
    let values: Vec<String> = ["5", "10", "20"].map(String::from).to_vec();
    let csv = || -> Result<String, String> {
        let res = simnet::sweep(&sc, Axis::NodeCount, &values).map_err(|e| e.to_string())?;
        Ok(simnet::csv_string(&simnet::sweep_rows(&sc.name, &res)))
    };
    let (a, b) = (csv()?, csv()?);
    if a != b || a.lines().count() != 4 {
        return Err(format!("sweep output differs or is short:\n{a}\n{b}"));
    }
    report(runner(64).run(&arb_scenario(), |sc| {
        let a = simnet::run_scenario(&sc).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b =
            simnet::run_scenario(&sc.clone()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(a.to_json(), b.to_json());
        Ok(())
    }))
}

// ---- checkpoint -----------------------------------------------------------

/// A log replayed from disk equals the log built in memory, also after a
/// torn final write.
pub fn checkpoint_replay(cases: u32) -> Result<(), String> {
    let strategy = (
        prop::collection::vec((0u8..10, 0u8..3), 0..40),
        prop::option::of(1usize..60),
    );
    report(runner(cases).run(&strategy, |(commits, torn)| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.log");
        let job = JobId::new("job").unwrap();
        let node = NodeId::new("n").unwrap();
        let mut file = CheckpointFile::open(&path, job.clone()).unwrap();
        let mut mem = CheckpointLog::new(job.clone());
        for &(tu, d) in &commits {
            let tu = TuId::new(format!("src/u{tu}.c")).unwrap();
            let digest = Digest::of(&[d]);
            let a = file
                .commit(tu.clone(), digest.clone(), node.clone())
                .map_err(|e| e.to_string());
            let b = mem
                .commit(tu, digest, node.clone())
                .map_err(|e| e.to_string());
            prop_assert_eq!(a, b);
        }
        if let Some(cut) = torn {
            let extra = "src/u99.c\t".repeat(8);
            let mut f = std::fs::OpenOptions::new()
                .append(true)
                .open(&path)
                .unwrap();
            std::io::Write::write_all(&mut f, &extra.as_bytes()[..cut.min(extra.len())]).unwrap();
        }
        drop(file);
        let replayed = CheckpointFile::replay(&path, job.clone()).unwrap();
        prop_assert_eq!(replayed.entries(), mem.entries());
        let mut reopened = CheckpointFile::open(&path, job.clone()).unwrap();
        prop_assert_eq!(reopened.log().entries(), mem.entries());
        reopened
            .commit(
                TuId::new("late.c").unwrap(),
                Digest::of(b"late"),
                node.clone(),
            )
            .unwrap();
        prop_assert_eq!(
            CheckpointFile::replay(&path, job).unwrap().len(),
            mem.len() + 1
        );
        Ok(())
    }))
}

/// Dedicated fleets get faster (or no slower) with more nodes when every
/// unit costs the same, and with more CPUs per node when no link is shared.
pub fn monotone_in_nodes(cases: u32) -> Result<(), String> {
    let strategy = (
        1usize..6,
        1u32..4,
        1usize..60,
        0.1f64..2.0,
        0.0f64..2e6,
        0.0f64..0.1,
    );
    report(
        runner(cases).run(&strategy, |(n, cpus, tus, cost, bytes, dispatch)| {
            let mut sc = Scenario::uniform("m", n, cpus, tus, Dist::Constant(cost));
            sc.input_bytes = Dist::Constant(bytes);
            sc.dispatch_overhead = dispatch;
            let a = simnet::run_scenario(&sc).unwrap().makespan;
            let b = simnet::run_scenario(
                &simnet::with_axis(&sc, Axis::NodeCount, &(n + 1).to_string()).unwrap(),
            )
            .unwrap()
            .makespan;
            let mut more_cpus = sc.clone();
            more_cpus.input_bytes = Dist::Constant(0.0);
            let a0 = simnet::run_scenario(&more_cpus).unwrap().makespan;
            for node in &mut more_cpus.nodes {
                node.cpus += 1;
            }
            let c = simnet::run_scenario(&more_cpus).unwrap().makespan;
            prop_assert!(b <= a + 1e-9, "{n} nodes: {a}, {} nodes: {b}", n + 1);
            prop_assert!(c <= a0 + 1e-9, "{cpus} cpus: {a0}, {} cpus: {c}", cpus + 1);
            Ok(())
        }),
    )
}

/// With busy traces, the same fleet run as dedicated machines finishes no
/// later than when run as shared machines.
pub fn policy_dominance(cases: u32) -> Result<(), String> {
    let strategy = (
        1usize..6,
        1usize..80,
        0.1f64..2.0,
        1.0f64..10.0,
        0.05f64..1.0,
        any::<u64>(),
    );
    report(
        runner(cases).run(&strategy, |(n, tus, cost, period, duty, seed)| {
            let mut sc = Scenario::uniform("p", n, 2, tus, Dist::Constant(cost));
            sc.seed = seed;
            for node in &mut sc.nodes {
                node.trace = Some(Trace::Periodic { period, duty });
            }
            let ded =
                simnet::run_scenario(&simnet::with_axis(&sc, Axis::Policy, "dedicated").unwrap())
                    .unwrap()
                    .makespan;
            let shared =
                simnet::run_scenario(&simnet::with_axis(&sc, Axis::Policy, "shared").unwrap())
                    .unwrap()
                    .makespan;
            prop_assert!(ded <= shared + 1e-9, "dedicated {ded} > shared {shared}");
            Ok(())
        }),
    )
}
