//! Deterministic discrete-event simulation of a compile farm.
//!
//! The simulator feeds modeled nodes, links and user-activity traces into
//! the real [`SchedulerState`](crate::scheduler::SchedulerState) and task
//! state machine, so every placement decision is the one the manager would
//! make. Time is measured in abstract minutes.
//!
//! Per dispatched unit a slot spends a fixed scheduling overhead, then the
//! input transfer on the node's link (FIFO, shared by the node's slots),
//! then the compile at `speed / (cost × virtualization_overhead)` (scaled by
//! `demoted_rate` while the node's user is active and the task is demoted),
//! then the output transfer.

mod calibrate;
mod engine;
mod report;
mod scenario;

use std::str::FromStr;

pub use self::calibrate::{
    bisect, cache_effect, mobile_build_calibration, office_policy_gap, office_scenario,
    virtualized_build, CacheEffect, MobileBuildFit, OfficePoint, OfficeResult, VirtualizedResult,
    OFFICE_NODES,
};
pub use self::engine::{run_scenario, run_with, RunOptions};
pub use self::report::{
    csv_string, write_csv, Breakdown, BusyInterval, CsvRow, NodeTimeline, Report,
};
pub use self::scenario::{Dist, Fault, Scenario, SimNode, Trace};

use crate::scheduler::Policy;
use crate::types::SchedulingClass;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no progress possible at t={at}: {unfinished} units unfinished")]
    Stalled { at: f64, unfinished: usize },
    #[error("invariant violated at t={at}: {detail}")]
    Invariant { at: f64, detail: String },
    #[error("internal: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NodeCount,
    Policy,
    CacheRedundancy,
    VirtualizationOverhead,
}

impl FromStr for Axis {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.trim() {
            "node_count" => Ok(Axis::NodeCount),
            "policy" => Ok(Axis::Policy),
            "cache_redundancy" => Ok(Axis::CacheRedundancy),
            "virtualization_overhead" => Ok(Axis::VirtualizationOverhead),
            other => Err(SimError::InvalidScenario(format!(
                "unknown sweep axis {other:?} (expected node_count, policy, cache_redundancy or virtualization_overhead)"
            ))),
        }
    }
}

/// The scenario with one axis set to `value`.
///
/// `node_count` repeats the base node list cyclically up to the count.
/// `policy=dedicated` turns every node into an idle dedicated machine with
/// no trace; `policy=shared` schedules every node as shared.
pub fn with_axis(base: &Scenario, axis: Axis, value: &str) -> Result<Scenario, SimError> {
    let bad = |m: String| SimError::InvalidScenario(m);
    let num = || {
        value
            .trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("axis value {value:?}: {e}")))
    };
    let mut sc = base.clone();
    match axis {
        Axis::NodeCount => {
            let n: usize = value
                .trim()
                .parse()
                .map_err(|e| bad(format!("node count {value:?}: {e}")))?;
            sc.nodes = base.nodes.iter().cycle().take(n).cloned().collect();
            sc.faults.retain(|f| f.node < n);
        }
        Axis::Policy => {
            let policy: Policy = value.parse().map_err(bad)?;
            sc.policy.policy = policy;
            match policy {
                Policy::DedicatedOnly => {
                    for n in &mut sc.nodes {
                        n.class = SchedulingClass::Dedicated;
                        n.trace = None;
                    }
                }
                Policy::SharedAllowed => {
                    for n in &mut sc.nodes {
                        n.class = SchedulingClass::Shared;
                    }
                }
                Policy::Hybrid => {}
            }
        }
        Axis::CacheRedundancy => sc.cache_redundancy = num()?,
        Axis::VirtualizationOverhead => sc.virtualization_overhead = num()?,
    }
    sc.validate()?;
    Ok(sc)
}

/// One run per value, all with the base seed.
pub fn sweep(
    base: &Scenario,
    axis: Axis,
    values: &[String],
) -> Result<Vec<(String, Report)>, SimError> {
    values
        .iter()
        .map(|v| Ok((v.clone(), run_scenario(&with_axis(base, axis, v)?)?)))
        .collect()
}

pub fn sweep_rows(scenario_id: &str, results: &[(String, Report)]) -> Vec<CsvRow> {
    results
        .iter()
        .map(|(v, r)| CsvRow::new(scenario_id, v, r))
        .collect()
}

/// Runs the scenario once with one slot per node and once with one slot
/// per CPU. Returns `(distcc, distcom)`.
pub fn compare_distcc_mode(sc: &Scenario) -> Result<(Report, Report), SimError> {
    let distcc = run_scenario(&Scenario {
        distcc_mode: true,
        ..sc.clone()
    })?;
    let distcom = run_scenario(&Scenario {
        distcc_mode: false,
        ..sc.clone()
    })?;
    Ok((distcc, distcom))
}
