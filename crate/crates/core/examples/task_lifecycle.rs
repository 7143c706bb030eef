//! Walks one compile task through offers, a user interruption, a lost node
//! and a final completion.

use distcom::{transition, CompileTask, JobId, NodeId, TaskEvent, TaskId, TuId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let id = TaskId::new(JobId::new("demo")?, TuId::new("src/main.c")?);
    let node = NodeId::new("desk-07")?;
    let mut task = CompileTask::new(id);
    let events = [
        TaskEvent::Offer {
            node: node.clone(),
            slot: 0,
        },
        TaskEvent::OfferDeclined,
        TaskEvent::Offer {
            node: node.clone(),
            slot: 1,
        },
        TaskEvent::Start,
        TaskEvent::UserAccessBreak,
        TaskEvent::Offer {
            node: node.clone(),
            slot: 0,
        },
        TaskEvent::Start,
        TaskEvent::NodeLost,
        TaskEvent::Offer { node, slot: 0 },
        TaskEvent::Start,
        TaskEvent::Complete,
    ];
    for ev in events {
        let step = transition(&task, &ev, 3)?;
        let via = step
            .transient
            .map(|t| format!(" (via {t:?})"))
            .unwrap_or_default();
        println!(
            "{:<40} -> {:?}{via}, attempts {}",
            format!("{ev:?}"),
            step.task.state,
            step.task.attempts
        );
        task = step.task;
    }
    // Terminal states accept nothing further.
    assert!(transition(&task, &TaskEvent::Start, 3).is_err());
    Ok(())
}
