//! Matches a job's target triple against the toolchains each node offers
//! and checks that all eligible nodes agree on the compiler version.

use distcom::xmapper::{resolve_toolchain, version_consistency_check};
use distcom::{NodeDescriptor, NodeId, SchedulingClass, TargetTriple, ToolchainId};

fn node(id: &str, toolchains: &[(&str, &str)]) -> NodeDescriptor {
    NodeDescriptor {
        node_id: NodeId::new(id).unwrap(),
        cpu_count: 2,
        os_family: "linux".into(),
        cpu_arch: "x86_64".into(),
        toolchains: toolchains
            .iter()
            .map(|(t, v)| ToolchainId::new(t.parse().unwrap(), v).unwrap())
            .collect(),
        load: 0.0,
        user_active: false,
        scheduling_class: SchedulingClass::Dedicated,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = [
        node(
            "a",
            &[
                ("x86_64-linux-gnu", "12.2.0"),
                ("arm-linux-gnueabihf", "12.2.0"),
            ],
        ),
        node("b", &[("x86_64-linux-gnu", "12.2.0")]),
        node(
            "c",
            &[
                ("x86_64-linux-gnu", "11.4.0"),
                ("x86_64-linux-gnu", "12.2.0"),
            ],
        ),
        node("d", &[("x86_64-linux-gnu", "13.1.0")]),
    ];
    for target in [
        "x86_64-linux-gnu",
        "arm-linux-gnueabihf",
        "aarch64-linux-gnu",
    ] {
        let target: TargetTriple = target.parse()?;
        println!("{target}:");
        for n in &fleet {
            match resolve_toolchain(&target, n) {
                Ok(tc) => println!("  {} uses {}", n.node_id, tc),
                Err(e) => println!("  {e}"),
            }
        }
        println!(
            "  strict: {:?}",
            version_consistency_check(&target, &fleet, false)
        );
        println!(
            "  mixed allowed: {:?}",
            version_consistency_check(&target, &fleet, true).is_ok()
        );
    }
    Ok(())
}
