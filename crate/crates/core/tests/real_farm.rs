//! End-to-end builds with real manager and daemon processes.

mod common;

use std::process::Command;
use std::time::Duration;

use common::*;

#[test]
fn distributed_objects_match_a_local_build() {
    let o = scenario_correctness();
    assert_eq!(o.exit, Some(0));
    assert_eq!(o.units, 49);
    assert!(
        o.mismatched.is_empty(),
        "objects differ: {:?}",
        o.mismatched
    );
    assert!(o.smoke.starts_with("corpus ok 48 units"), "{}", o.smoke);
}

#[test]
fn losing_a_daemon_recompiles_only_uncommitted_units() {
    let o = scenario_checkpoint();
    assert_eq!(o.exit, Some(0));
    // The doomed daemon had one slot, so exactly one unit was in flight.
    assert_eq!(o.in_flight_at_kill, 1);
    assert_eq!(o.committed_at_kill, o.total / 2 - 1);
    assert_eq!(o.recompiled, (o.total - o.committed_at_kill) as u64);
    assert_eq!(o.executed_ok, o.total as u64);
    assert_eq!(o.dispatched, o.total as u64 + 1);
}

#[test]
fn second_build_is_served_from_the_cache() {
    let o = scenario_cache();
    assert_eq!((o.first_exit, o.second_exit), (Some(0), Some(0)));
    assert_eq!(o.cache_hits, o.total as u64);
    assert_eq!(o.dispatched, 0);
}

#[test]
fn no_daemon_means_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let m = start_manager(&tmp.path().join("staging"), None);
    let out = build(&corpus.join("project.manifest"), &m.addr, &[]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn foreign_target_daemon_means_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), Some("aarch64-linux-gnu"));
    let corpus = corpus(tmp.path());
    let m = start_manager(&tmp.path().join("staging"), None);
    let _d = start_daemon(&m.addr, &tc, "arm", 1, &[]);
    let out = build(&corpus.join("project.manifest"), &m.addr, &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unreachable_manager_means_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = corpus(tmp.path());
    let out = build(&corpus.join("project.manifest"), "127.0.0.1:1", &[]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn broken_source_means_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), None);
    let corpus = corpus(tmp.path());
    std::fs::write(corpus.join("src/u05.c"), "#include \"missing.h\"\n").unwrap();
    let m = start_manager(&tmp.path().join("staging"), None);
    let _d = start_daemon(&m.addr, &tc, "d", 1, &[]);
    let out = build(&corpus.join("project.manifest"), &m.addr, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compiler_wrapper_compiles_remotely_and_passes_through_the_rest() {
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), None);
    let corpus = corpus(tmp.path());
    let m = start_manager(&tmp.path().join("staging"), None);
    let _d = start_daemon(&m.addr, &tc, "d", 1, &[]);
    let cc = |args: &[&str]| {
        Command::new(CLIENT)
            .current_dir(&corpus)
            .args(["cc", "--manager", &m.addr, "--"])
            .args(args)
            .status()
            .unwrap()
    };
    assert!(cc(&["gcc", "-O2", "-Iinclude", "-c", "src/u03.c", "-o", "u03.o"]).success());
    let local = Command::new("gcc")
        .current_dir(&corpus)
        .args(["-O2", "-Iinclude", "-c", "src/u03.c", "-o", "l.o"])
        .status()
        .unwrap();
    assert!(local.success());
    assert_eq!(
        std::fs::read(corpus.join("u03.o")).unwrap(),
        std::fs::read(corpus.join("l.o")).unwrap()
    );
    // Preprocess-only runs locally and keeps its exit status.
    assert!(cc(&["gcc", "-Iinclude", "-E", "src/u03.c", "-o", "u03.i"]).success());
    assert!(corpus.join("u03.i").exists());
    assert_eq!(cc(&["gcc", "-E", "src/does-not-exist.c"]).code(), Some(1));
}

#[test]
fn scripted_trace_daemon_registers_as_shared() {
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), None);
    let trace = tmp.path().join("trace.txt");
    std::fs::write(&trace, "0 1\n0.3 0\n").unwrap();
    let mut m = start_manager(&tmp.path().join("staging"), None);
    let args = ["--class", "shared", "--trace", trace.to_str().unwrap()];
    let _d = start_daemon(&m.addr, &tc, "s", 1, &args);
    m.proc
        .wait_for("node s registered as shared", Duration::from_secs(10));
}
