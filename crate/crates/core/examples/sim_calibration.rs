//! Fits the reference scenarios and prints their predictions.

use distcom::simnet::{
    cache_effect, mobile_build_calibration, office_policy_gap, virtualized_build,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = std::time::Instant::now();
    let mobile = mobile_build_calibration()?;
    println!(
        "single machine {:.1} min; 9 nodes {:.1} min ({:.0}% faster); split net {:.2} compute {:.2} sched {:.2}",
        mobile.single_makespan,
        mobile.makespan,
        100.0 * mobile.reduction,
        mobile.breakdown.network,
        mobile.breakdown.compute,
        mobile.breakdown.scheduling
    );
    println!(
        "  fitted dispatch overhead {:.3} min, input {:.1} MB, mean cost {:.3} min  [{:?}]",
        mobile.dispatch_overhead,
        mobile.input_bytes / 1e6,
        mobile.cost_mean,
        t.elapsed()
    );

    let office = office_policy_gap()?;
    println!(
        "office fleet efficiency {:.2}; 8-core server {:.2} min",
        office.efficiency, office.server
    );
    for p in &office.points {
        println!(
            "  {:>2} nodes: dedicated {:6.2}  shared {:6.2}  gap {:4.1}%",
            p.nodes,
            p.dedicated,
            p.shared,
            100.0 * p.gap
        );
    }
    println!("  mean gap {:.1}%", 100.0 * office.mean_gap);

    let virt = virtualized_build()?;
    println!(
        "native 40 cores {:.1} min; 40 guests {:.1} min",
        virt.native, virt.virtualized
    );

    let cache = cache_effect()?;
    println!(
        "redundancy {:.3}: reduction {:.1}% (fit), {:.1}% (office fleet)",
        cache.redundancy,
        100.0 * cache.fit_reduction,
        100.0 * cache.check_reduction
    );
    println!("total {:?}", t.elapsed());
    Ok(())
}
