//! Sweeps the office scenario over fleet size and scheduling policy and
//! prints the results as CSV.

use std::path::Path;

use distcom::simnet::{self, Axis, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/office.scn"))?;
    let sizes: Vec<String> = ["5", "10", "20", "30"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for policy in ["dedicated", "shared"] {
        let sc = simnet::with_axis(&base, Axis::Policy, policy)?;
        let results = simnet::sweep(&sc, Axis::NodeCount, &sizes)?;
        rows.extend(simnet::sweep_rows(&format!("office-{policy}"), &results));
    }
    simnet::write_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
