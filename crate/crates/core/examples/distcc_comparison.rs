//! Compares one-job-per-host scheduling with one job per CPU on dual-core
//! nodes, with and without transfer overheads.

use distcom::simnet::{compare_distcc_mode, Dist, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::uniform("dual-core", 9, 2, 180, Dist::Constant(1.0));
    let (distcc, distcom) = compare_distcc_mode(&sc)?;
    println!(
        "no overhead:   one per host {:5.2} min, one per CPU {:5.2} min",
        distcc.makespan, distcom.makespan
    );

    sc.input_bytes = Dist::Constant(2.5e6);
    sc.output_bytes = Dist::Constant(0.6e6);
    sc.dispatch_overhead = 0.05;
    let (distcc, distcom) = compare_distcc_mode(&sc)?;
    println!(
        "with overhead: one per host {:5.2} min, one per CPU {:5.2} min",
        distcc.makespan, distcom.makespan
    );
    Ok(())
}
