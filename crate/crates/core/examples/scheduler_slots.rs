//! Fills the CPU slots of a dedicated and a shared node, then shows how the
//! scheduler reacts when the shared node's user returns.

use distcom::scheduler::Directive;
use distcom::{
    JobId, NodeDescriptor, NodeId, Policy, PolicyConfig, SchedulerState, SchedulingClass, TaskId,
    ToolchainId, TuId,
};

fn node(id: &str, cpus: u32, class: SchedulingClass, tc: &ToolchainId) -> NodeDescriptor {
    NodeDescriptor {
        node_id: NodeId::new(id).unwrap(),
        cpu_count: cpus,
        os_family: "linux".into(),
        cpu_arch: "x86_64".into(),
        toolchains: [tc.clone()].into(),
        load: 0.0,
        user_active: false,
        scheduling_class: class,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tc = ToolchainId::new("x86_64-linux-gnu".parse()?, "12.2.0")?;
    let mut cfg = PolicyConfig::with_policy(Policy::Hybrid);
    cfg.stop_on_user_access = true;
    let mut s = SchedulerState::new();
    s.add_node(node("server", 4, SchedulingClass::Dedicated, &tc), &cfg)?;
    s.add_node(node("desk", 2, SchedulingClass::Shared, &tc), &cfg)?;

    let job = JobId::new("app")?;
    s.register_job(job.clone(), tc.target().clone(), None);
    for i in 0..8 {
        s.enqueue(
            TaskId::new(job.clone(), TuId::new(format!("u{i}.c"))?),
            cfg.queue_for(None),
        )?;
    }
    while let Some(a) = s.allocate_next(&cfg) {
        s.mark_started(&a.task)?;
        println!("{} -> {} slot {} ({})", a.task, a.node, a.slot, a.toolchain);
    }
    println!("{} running, {} queued", s.in_flight(), s.queued_len());

    for d in s.on_user_activity(&NodeId::new("desk")?, true, &cfg)? {
        if let Directive::Task { task, event } = d {
            println!("user returned: {task} gets {event:?}");
        }
    }
    println!("{} running, {} queued", s.in_flight(), s.queued_len());
    s.check_invariants()?;
    Ok(())
}
