//! Task lifecycle.
//!
//! ```text
//!            Offer            Start             Complete
//! Pending ---------> Assigned ------> Running ----------> Finished
//!    ^  \               |   \            |  \
//!    |   \ CacheHit     |    \ NodeLost  |   \ UserAccessBreak -> Stopped -+
//!    |    `--> Finished |     `-> Pending|    \ NodeLost, ExecError        |
//!    |                  |                |     `-> Pending (attempts + 1)  |
//!    |                  OfferDeclined -> Rejected -------------------------+
//!    +---------------------------------------------------------------------+
//!                         any non-terminal + Exhausted -> Failed
//! ```
//!
//! `Rejected` and `Stopped` are transient: the transition that enters them
//! immediately requeues the task as `Pending`. The intermediate state is
//! reported in [`Step::transient`] so histories still record it.
//!
//! Failures that are charged to the task (`NodeLost`, `ExecError`) bump
//! `attempts`; when that would exceed `max_attempts` the task fails instead.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{NodeId, TaskId};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Assigned,
    Running,
    Rejected,
    Stopped,
    Finished,
    Failed,
}

impl TaskState {
    pub const ALL: [TaskState; 7] = [
        TaskState::Pending,
        TaskState::Assigned,
        TaskState::Running,
        TaskState::Rejected,
        TaskState::Stopped,
        TaskState::Finished,
        TaskState::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Finished | TaskState::Failed)
    }

    /// States in which the task occupies a slot on some node.
    pub fn holds_slot(self) -> bool {
        matches!(self, TaskState::Assigned | TaskState::Running)
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskEvent {
    /// The scheduler offers the task to a slot on a node.
    Offer {
        node: NodeId,
        slot: usize,
    },
    /// The node refused the offer.
    OfferDeclined,
    Start,
    Complete,
    /// The node's user came back and the task was stopped.
    UserAccessBreak,
    NodeLost,
    ExecError,
    /// Give up on the task regardless of state.
    Exhausted,
    /// The object was found in the cache; no dispatch happens.
    CacheHit,
}

impl TaskEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TaskEvent::Offer { .. } => "Offer",
            TaskEvent::OfferDeclined => "OfferDeclined",
            TaskEvent::Start => "Start",
            TaskEvent::Complete => "Complete",
            TaskEvent::UserAccessBreak => "UserAccessBreak",
            TaskEvent::NodeLost => "NodeLost",
            TaskEvent::ExecError => "ExecError",
            TaskEvent::Exhausted => "Exhausted",
            TaskEvent::CacheHit => "CacheHit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition: {event} in state {state}")]
pub struct IllegalTransition {
    pub state: TaskState,
    pub event: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileTask {
    pub id: TaskId,
    pub state: TaskState,
    pub attempts: u32,
    pub assigned_node: Option<NodeId>,
    pub assigned_slot: Option<usize>,
}

/// Result of a legal transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub task: CompileTask,
    /// `Rejected` or `Stopped` when the task passed through one on its way
    /// back to `Pending`.
    pub transient: Option<TaskState>,
}

impl CompileTask {
    pub fn new(id: TaskId) -> Self {
        CompileTask {
            id,
            state: TaskState::Pending,
            attempts: 0,
            assigned_node: None,
            assigned_slot: None,
        }
    }

    pub fn transition(
        &self,
        event: &TaskEvent,
        max_attempts: u32,
    ) -> Result<Step, IllegalTransition> {
        transition(self, event, max_attempts)
    }
}

/// Applies one event. Pure: the input task is never modified.
pub fn transition(
    task: &CompileTask,
    event: &TaskEvent,
    max_attempts: u32,
) -> Result<Step, IllegalTransition> {
    use TaskEvent as E;
    use TaskState as S;

    let illegal = || IllegalTransition {
        state: task.state,
        event: event.name(),
    };
    let mut next = task.clone();
    let mut transient = None;

    let unassign = |t: &mut CompileTask| {
        t.assigned_node = None;
        t.assigned_slot = None;
    };
    // Failure charged to the task: retry or give up.
    let charge = |t: &mut CompileTask| {
        unassign(t);
        if t.attempts + 1 > max_attempts {
            t.state = S::Failed;
        } else {
            t.attempts += 1;
            t.state = S::Pending;
        }
    };

    match (task.state, event) {
        (S::Pending, E::Offer { node, slot }) => {
            next.state = S::Assigned;
            next.assigned_node = Some(node.clone());
            next.assigned_slot = Some(*slot);
        }
        (S::Pending, E::CacheHit) => next.state = S::Finished,
        (S::Assigned, E::OfferDeclined) => {
            transient = Some(S::Rejected);
            unassign(&mut next);
            next.state = S::Pending;
        }
        (S::Assigned, E::Start) => next.state = S::Running,
        (S::Running, E::Complete) => {
            unassign(&mut next);
            next.state = S::Finished;
        }
        (S::Running, E::UserAccessBreak) => {
            // Partial output is discarded; the object file is atomic.
            transient = Some(S::Stopped);
            unassign(&mut next);
            next.state = S::Pending;
        }
        (S::Running | S::Assigned, E::NodeLost) | (S::Running, E::ExecError) => charge(&mut next),
        (state, E::Exhausted) if !state.is_terminal() => {
            unassign(&mut next);
            next.state = S::Failed;
        }
        _ => return Err(illegal()),
    }
    Ok(Step {
        task: next,
        transient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{JobId, TuId};

    fn task(state: TaskState, attempts: u32) -> CompileTask {
        let mut t = CompileTask::new(TaskId::new(
            JobId::new("j").unwrap(),
            TuId::new("tu").unwrap(),
        ));
        t.state = state;
        t.attempts = attempts;
        if state.holds_slot() {
            t.assigned_node = Some(NodeId::new("n").unwrap());
            t.assigned_slot = Some(0);
        }
        t
    }

    fn offer() -> TaskEvent {
        TaskEvent::Offer {
            node: NodeId::new("n").unwrap(),
            slot: 0,
        }
    }

    #[test]
    fn pending_offer_assigns() {
        let step = transition(&task(TaskState::Pending, 0), &offer(), 3).unwrap();
        assert_eq!(step.task.state, TaskState::Assigned);
        assert_eq!(step.task.assigned_slot, Some(0));
        assert_eq!(step.transient, None);
    }

    #[test]
    fn user_break_stops_then_requeues() {
        let step =
            transition(&task(TaskState::Running, 0), &TaskEvent::UserAccessBreak, 3).unwrap();
        assert_eq!(step.transient, Some(TaskState::Stopped));
        assert_eq!(step.task.state, TaskState::Pending);
        assert_eq!(step.task.attempts, 0);
        assert_eq!(step.task.assigned_node, None);
    }

    #[test]
    fn node_lost_retries_with_attempt() {
        let step = transition(&task(TaskState::Running, 0), &TaskEvent::NodeLost, 3).unwrap();
        assert_eq!(step.task.state, TaskState::Pending);
        assert_eq!(step.task.attempts, 1);
    }

    #[test]
    fn exec_error_exhausts_after_max_attempts() {
        let step = transition(&task(TaskState::Running, 2), &TaskEvent::ExecError, 3).unwrap();
        assert_eq!(
            (step.task.state, step.task.attempts),
            (TaskState::Pending, 3)
        );
        let step = transition(&task(TaskState::Running, 3), &TaskEvent::ExecError, 3).unwrap();
        assert_eq!(
            (step.task.state, step.task.attempts),
            (TaskState::Failed, 3)
        );
    }

    #[test]
    fn declined_offer_is_rejected_then_pending() {
        let step = transition(&task(TaskState::Assigned, 1), &TaskEvent::OfferDeclined, 3).unwrap();
        assert_eq!(step.transient, Some(TaskState::Rejected));
        assert_eq!(
            (step.task.state, step.task.attempts),
            (TaskState::Pending, 1)
        );
    }

    #[test]
    fn finished_is_terminal() {
        let err = transition(&task(TaskState::Finished, 0), &TaskEvent::Start, 3).unwrap_err();
        assert_eq!(
            err,
            IllegalTransition {
                state: TaskState::Finished,
                event: "Start"
            }
        );
        assert!(transition(&task(TaskState::Finished, 0), &TaskEvent::Exhausted, 3).is_err());
        assert!(transition(&task(TaskState::Failed, 0), &TaskEvent::Exhausted, 3).is_err());
    }

    #[test]
    fn cache_hit_only_from_pending() {
        assert_eq!(
            transition(&task(TaskState::Pending, 0), &TaskEvent::CacheHit, 3)
                .unwrap()
                .task
                .state,
            TaskState::Finished
        );
        assert!(transition(&task(TaskState::Running, 0), &TaskEvent::CacheHit, 3).is_err());
    }
}
