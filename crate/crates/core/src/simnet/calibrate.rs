//! Calibrated reference scenarios for the published measurements.

use std::sync::OnceLock;

use crate::scheduler::{Policy, PolicyConfig};
use crate::types::SchedulingClass;

use super::scenario::{Dist, Scenario, SimNode, Trace};
use super::{run_scenario, with_axis, Axis, Breakdown, SimError};

/// Single-machine build time of the mobile platform, minutes.
pub const SINGLE_NODE_MINUTES: f64 = 51.0;
/// Slot-time split of the 9-node distributed build.
pub const TARGET_SPLIT: Breakdown = Breakdown {
    network: 0.25,
    compute: 0.30,
    scheduling: 0.45,
};
/// Share of powered-on time a shared machine's user is present.
pub const SHARED_DUTY: f64 = 0.72;
/// Parallel efficiency of the office fleet used for the node-count sweep.
pub const FLEET_EFFICIENCY: f64 = 0.85;
/// CPU-bound slowdown of a KVM guest.
pub const KVM_OVERHEAD: f64 = 1.03;
/// Native 40-core build time, minutes.
pub const NATIVE_40_MINUTES: f64 = 17.0;

const TUS: usize = 600;
const SIGMA: f64 = 0.6;
const SEED: u64 = 2013;
const OUTPUT_RATIO: f64 = 0.25;

/// Finds `x` in `[lo, hi]` with `f(x) ≈ target` for monotone `f`.
pub fn bisect(
    mut f: impl FnMut(f64) -> Result<f64, SimError>,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    iters: usize,
) -> Result<f64, SimError> {
    let rising = f(hi)? >= f(lo)?;
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? < target) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn dual_core_fleet(n: usize, tus: usize, mean: f64) -> Scenario {
    let mut sc = Scenario::uniform("fleet", n, 2, tus, Dist::LogNormal { mean, sigma: SIGMA });
    sc.seed = SEED;
    sc
}

fn with_overheads(mut sc: Scenario, dispatch: f64, input: f64) -> Scenario {
    sc.dispatch_overhead = dispatch;
    sc.input_bytes = Dist::Constant(input);
    sc.output_bytes = Dist::Constant(input * OUTPUT_RATIO);
    sc
}

fn makespan(sc: &Scenario) -> Result<f64, SimError> {
    Ok(run_scenario(sc)?.makespan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileBuildFit {
    pub cost_mean: f64,
    pub dispatch_overhead: f64,
    pub input_bytes: f64,
    pub single_makespan: f64,
    pub breakdown: Breakdown,
    pub makespan: f64,
    /// `1 - makespan / single_makespan`.
    pub reduction: f64,
    pub scenario: Scenario,
}

/// Pins the single dual-core machine to 51 minutes, fits the dispatch
/// overhead and transfer size to the 9-node split, and predicts the
/// 9-node makespan.
pub fn mobile_build_calibration() -> Result<MobileBuildFit, SimError> {
    static FIT: OnceLock<Result<MobileBuildFit, SimError>> = OnceLock::new();
    FIT.get_or_init(fit_mobile_build).clone()
}

fn fit_mobile_build() -> Result<MobileBuildFit, SimError> {
    let cost_mean = bisect(
        |m| makespan(&dual_core_fleet(1, TUS, m)),
        0.01,
        1.0,
        SINGLE_NODE_MINUTES,
        40,
    )?;
    let single_makespan = makespan(&dual_core_fleet(1, TUS, cost_mean))?;
    let nine = dual_core_fleet(9, TUS, cost_mean);

    let split = |d: f64, s: f64| -> Result<Breakdown, SimError> {
        Ok(run_scenario(&with_overheads(nine.clone(), d, s))?.breakdown)
    };
    // Bytes that take one mean compile time to send at 100 Mbps.
    let unit_bytes = cost_mean * 60.0 * 100e6 / 8.0;
    let (mut d, mut s) = (cost_mean, unit_bytes);
    for _ in 0..20 {
        d = bisect(
            |d| Ok(split(d, s)?.scheduling),
            0.0,
            20.0 * cost_mean,
            TARGET_SPLIT.scheduling,
            24,
        )?;
        s = bisect(
            |s| Ok(split(d, s)?.network),
            0.0,
            20.0 * unit_bytes,
            TARGET_SPLIT.network,
            24,
        )?;
        let b = split(d, s)?;
        if (b.scheduling - TARGET_SPLIT.scheduling).abs() < 1e-3
            && (b.network - TARGET_SPLIT.network).abs() < 1e-3
        {
            break;
        }
    }
    let mut scenario = with_overheads(nine, d, s);
    scenario.name = "mobile".into();
    let report = run_scenario(&scenario)?;
    Ok(MobileBuildFit {
        cost_mean,
        dispatch_overhead: d,
        input_bytes: s,
        single_makespan,
        breakdown: report.breakdown,
        makespan: report.makespan,
        reduction: 1.0 - report.makespan / single_makespan,
        scenario,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfficePoint {
    pub nodes: usize,
    pub dedicated: f64,
    pub shared: f64,
    /// `1 - dedicated / shared`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfficeResult {
    pub points: Vec<OfficePoint>,
    pub mean_gap: f64,
    /// Local build on one 8-core machine at twice the per-core speed.
    pub server: f64,
    pub efficiency: f64,
    pub scenario: Scenario,
}

pub const OFFICE_NODES: [usize; 6] = [5, 10, 15, 20, 25, 30];
const OFFICE_TUS: usize = 2000;

/// Office fleet of dual-core shared machines whose users follow the
/// default busy trace, with overheads in the 9-node split's proportions
/// scaled to the fleet efficiency.
pub fn office_scenario(cost_mean: f64) -> Result<Scenario, SimError> {
    let mean = cost_mean * TUS as f64 / OFFICE_TUS as f64;
    let base = dual_core_fleet(10, OFFICE_TUS, mean);
    // Overhead ratio network:scheduling follows the 9-node split.
    let unit_bytes = mean * 60.0 * 100e6 / 8.0;
    let shape = |k: f64| {
        let per_task = k * mean;
        let sched =
            per_task * TARGET_SPLIT.scheduling / (TARGET_SPLIT.scheduling + TARGET_SPLIT.network);
        let net = per_task - sched;
        with_overheads(
            base.clone(),
            sched,
            net / (1.0 + OUTPUT_RATIO) / mean * unit_bytes,
        )
    };
    let k = bisect(
        |k| Ok(run_scenario(&shape(k))?.breakdown.compute),
        0.0,
        2.0,
        FLEET_EFFICIENCY,
        30,
    )?;
    let mut sc = shape(k);
    sc.name = "office".into();
    sc.policy = PolicyConfig::with_policy(Policy::SharedAllowed);
    for n in &mut sc.nodes {
        *n = SimNode {
            cpus: 2,
            speed: 1.0,
            class: SchedulingClass::Shared,
            trace: Some(Trace::Periodic {
                period: 10.0,
                duty: SHARED_DUTY,
            }),
            busy_load: 0.5,
        };
    }
    Ok(sc)
}

pub fn office_policy_gap() -> Result<OfficeResult, SimError> {
    let mobile = mobile_build_calibration()?;
    let scenario = office_scenario(mobile.cost_mean)?;
    let mut points = Vec::new();
    for n in OFFICE_NODES {
        let sized = with_axis(&scenario, Axis::NodeCount, &n.to_string())?;
        let dedicated = makespan(&with_axis(&sized, Axis::Policy, "dedicated")?)?;
        let shared = makespan(&with_axis(&sized, Axis::Policy, "shared")?)?;
        points.push(OfficePoint {
            nodes: n,
            dedicated,
            shared,
            gap: 1.0 - dedicated / shared,
        });
    }
    let mean_gap = points.iter().map(|p| p.gap).sum::<f64>() / points.len() as f64;

    let mut server = Scenario::uniform("server", 1, 8, OFFICE_TUS, scenario.cost.clone());
    server.nodes[0].speed = 2.0;
    server.seed = scenario.seed;
    let efficiency = run_scenario(&with_axis(&scenario, Axis::Policy, "dedicated")?)?
        .breakdown
        .compute;
    Ok(OfficeResult {
        points,
        mean_gap,
        server: makespan(&server)?,
        efficiency,
        scenario,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualizedResult {
    pub native: f64,
    pub virtualized: f64,
    pub scenario: Scenario,
}

/// Workload pinned so a native 40-core local build takes 17 minutes, then
/// run on 40 single-CPU guests with the fleet's overheads and the KVM factor.
pub fn virtualized_build() -> Result<VirtualizedResult, SimError> {
    let mobile = mobile_build_calibration()?;
    let fleet = office_scenario(mobile.cost_mean)?;
    let native_of = |mean: f64| {
        let mut sc = Scenario::uniform(
            "native",
            1,
            40,
            OFFICE_TUS,
            Dist::LogNormal { mean, sigma: SIGMA },
        );
        sc.seed = SEED;
        sc
    };
    let mean = bisect(
        |m| makespan(&native_of(m)),
        0.01,
        2.0,
        NATIVE_40_MINUTES,
        40,
    )?;
    let native = makespan(&native_of(mean))?;

    // Keep the fleet's overhead-to-compute proportions.
    let k = mean / fleet.cost.mean();
    let mut sc = Scenario::uniform(
        "virtualized",
        40,
        1,
        OFFICE_TUS,
        Dist::LogNormal { mean, sigma: SIGMA },
    );
    sc.seed = SEED;
    sc.dispatch_overhead = fleet.dispatch_overhead * k;
    sc.input_bytes = fleet.input_bytes.scaled(k);
    sc.output_bytes = fleet.output_bytes.scaled(k);
    sc.virtualization_overhead = KVM_OVERHEAD;
    Ok(VirtualizedResult {
        native,
        virtualized: makespan(&sc)?,
        scenario: sc,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEffect {
    pub redundancy: f64,
    /// Reduction on the scenario the redundancy was fit on.
    pub fit_reduction: f64,
    /// Reduction on an independent scenario with the same redundancy.
    pub check_reduction: f64,
}

pub const CACHE_REDUCTION: f64 = 0.10;

/// Fits the redundant-unit fraction on the 9-node build and applies it to
/// a 20-node dedicated office fleet.
pub fn cache_effect() -> Result<CacheEffect, SimError> {
    let mobile = mobile_build_calibration()?;
    let reduction = |sc: &Scenario, r: f64| -> Result<f64, SimError> {
        let base = makespan(sc)?;
        Ok(1.0 - makespan(&with_axis(sc, Axis::CacheRedundancy, &r.to_string())?)? / base)
    };
    let redundancy = bisect(
        |r| reduction(&mobile.scenario, r),
        0.0,
        0.5,
        CACHE_REDUCTION,
        20,
    )?;
    let fit_reduction = reduction(&mobile.scenario, redundancy)?;
    let office = office_scenario(mobile.cost_mean)?;
    let office = with_axis(
        &with_axis(&office, Axis::NodeCount, "20")?,
        Axis::Policy,
        "dedicated",
    )?;
    let check_reduction = reduction(&office, redundancy)?;
    Ok(CacheEffect {
        redundancy,
        fit_reduction,
        check_reduction,
    })
}
