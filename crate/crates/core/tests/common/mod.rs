//! Process-level harness: a manager, some daemons and the bundled corpus.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc::{channel, Receiver};
use std::time::{Duration, Instant};

use distcom::client::{ManagerClient, Manifest};
use distcom::manager::JobStatus;
use distcom::{Digest, JobId};

pub const MANAGER: &str = env!("CARGO_BIN_EXE_distcom-manager");
pub const DAEMON: &str = env!("CARGO_BIN_EXE_distcom-daemon");
pub const CLIENT: &str = env!("CARGO_BIN_EXE_distcom");

/// A child process whose output lines are collected; killed on drop.
pub struct Proc {
    child: Child,
    lines: Receiver<String>,
    seen: Vec<String>,
}

impl Proc {
    fn spawn(mut cmd: Command) -> Proc {
        cmd.stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .env("RUST_LOG", "info");
        let mut child = cmd.spawn().expect("spawn");
        let (tx, rx) = channel();
        for pipe in [
            Box::new(child.stdout.take().unwrap()) as Box<dyn std::io::Read + Send>,
            Box::new(child.stderr.take().unwrap()),
        ] {
            let tx = tx.clone();
            std::thread::spawn(move || {
                for line in BufReader::new(pipe).lines().map_while(Result::ok) {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
        }
        Proc {
            child,
            lines: rx,
            seen: Vec::new(),
        }
    }

    /// Waits for an output line containing `needle` and returns it.
    pub fn wait_for(&mut self, needle: &str, timeout: Duration) -> String {
        if let Some(l) = self.seen.iter().find(|l| l.contains(needle)) {
            return l.clone();
        }
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    self.seen.push(line.clone());
                    if line.contains(needle) {
                        return line;
                    }
                }
                Err(_) => panic!(
                    "no line containing {needle:?} within {timeout:?}; saw {:#?}",
                    self.seen
                ),
            }
        }
    }

    pub fn wait_exit(&mut self, timeout: Duration) -> Option<i32> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(st) = self.child.try_wait().expect("try_wait") {
                return st.code();
            }
            if Instant::now() > deadline {
                panic!("process still running after {timeout:?}");
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ManagerProc {
    pub proc: Proc,
    pub addr: String,
}

pub fn start_manager(staging: &Path, cache: Option<&Path>) -> ManagerProc {
    let mut cmd = Command::new(MANAGER);
    cmd.args([
        "--listen",
        "127.0.0.1:0",
        "--heartbeat-ms",
        "200",
        "--staging",
    ])
    .arg(staging);
    if let Some(c) = cache {
        cmd.arg("--cache-dir").arg(c);
    }
    let mut proc = Proc::spawn(cmd);
    let line = proc.wait_for("listening on ", Duration::from_secs(20));
    let addr = line.rsplit(' ').next().unwrap().to_owned();
    ManagerProc { proc, addr }
}

pub fn start_daemon(manager: &str, toolchains: &Path, id: &str, cpus: u32, extra: &[&str]) -> Proc {
    let mut cmd = Command::new(DAEMON);
    cmd.args(["--manager", manager, "--toolchains"])
        .arg(toolchains)
        .args([
            "--node-id",
            id,
            "--cpus",
            &cpus.to_string(),
            "--heartbeat-ms",
            "200",
        ])
        .args(extra);
    let mut p = Proc::spawn(cmd);
    p.wait_for("registered as", Duration::from_secs(20));
    p
}

fn gcc(arg: &str) -> String {
    let out = Command::new("gcc")
        .arg(arg)
        .output()
        .expect("gcc is installed");
    String::from_utf8(out.stdout).unwrap().trim().to_owned()
}

/// A toolchain directory describing the host gcc, optionally for `target`.
pub fn toolchain_dir(root: &Path, target: Option<&str>) -> PathBuf {
    let dir = root.join("toolchains");
    std::fs::create_dir_all(dir.join("gcc")).unwrap();
    let target = target
        .map(str::to_owned)
        .unwrap_or_else(|| gcc("-dumpmachine"));
    std::fs::write(
        dir.join("gcc").join("toolchain.meta"),
        format!(
            "target = {target}\ncompiler = gcc\nversion = {}\n",
            gcc("-dumpversion")
        ),
    )
    .unwrap();
    dir
}

/// A scratch copy of the bundled corpus.
pub fn corpus(root: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let dst = root.join("corpus");
    copy_tree(&src, &dst);
    dst
}

fn copy_tree(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for e in std::fs::read_dir(src).unwrap() {
        let e = e.unwrap();
        let to = dst.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            if e.file_name() != ".distcom" {
                copy_tree(&e.path(), &to);
            }
        } else {
            std::fs::copy(e.path(), to).unwrap();
        }
    }
}

pub fn build(manifest: &Path, manager: &str, extra: &[&str]) -> Output {
    Command::new(CLIENT)
        .args(["build", "--manifest"])
        .arg(manifest)
        .args(["--manager", manager, "--timeout", "300"])
        .args(extra)
        .output()
        .expect("run client")
}

pub fn job_id(out: &Output) -> JobId {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with("job "))
        .unwrap_or_else(|| panic!("no job line in {text:?}"));
    JobId::new(line.split_whitespace().nth(1).unwrap()).unwrap()
}

pub fn status(manager: &str, job: &JobId) -> JobStatus {
    ManagerClient::connect(manager, Duration::from_secs(5))
        .unwrap()
        .status(job)
        .unwrap()
}

/// Digests of the objects a plain sequential `gcc -c` build produces.
pub fn local_digests(corpus: &Path) -> BTreeMap<String, Digest> {
    let m = Manifest::load(&corpus.join("project.manifest")).unwrap();
    let out = corpus.join("local-obj");
    std::fs::create_dir_all(&out).unwrap();
    let mut res = BTreeMap::new();
    for u in &m.units {
        let name = distcom::client::object_name(&u.tu_id());
        let obj = out.join(&name);
        let argv = m.compile_argv(u, &obj);
        let st = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(corpus)
            .status()
            .unwrap();
        assert!(st.success(), "local compile of {}", u.source.display());
        res.insert(
            name.to_string_lossy().into_owned(),
            Digest::of(&std::fs::read(&obj).unwrap()),
        );
    }
    res
}

pub fn farm_digests(corpus: &Path) -> BTreeMap<String, Digest> {
    std::fs::read_dir(corpus.join(".distcom").join("obj"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                Digest::of(&std::fs::read(e.path()).unwrap()),
            )
        })
        .collect()
}

pub fn run_smoke(corpus: &Path) -> String {
    let out = Command::new(corpus.join("corpus-app"))
        .output()
        .expect("run linked binary");
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

pub fn units(corpus: &Path) -> usize {
    Manifest::load(&corpus.join("project.manifest"))
        .unwrap()
        .units
        .len()
}

pub struct CorrectnessOutcome {
    pub exit: Option<i32>,
    pub units: usize,
    pub mismatched: Vec<String>,
    pub smoke: String,
    pub elapsed: Duration,
}

/// Three daemons build the corpus; objects are compared with a local build.
pub fn scenario_correctness() -> CorrectnessOutcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), None);
    let corpus = corpus(tmp.path());
    let m = start_manager(&tmp.path().join("staging"), None);
    let _daemons: Vec<Proc> = (0..3)
        .map(|i| start_daemon(&m.addr, &tc, &format!("d{i}"), 2, &[]))
        .collect();
    let out = build(&corpus.join("project.manifest"), &m.addr, &[]);
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    let local = local_digests(&corpus);
    let farm = farm_digests(&corpus);
    let mismatched = local
        .iter()
        .filter(|(k, v)| farm.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    let smoke = if out.status.success() {
        run_smoke(&corpus)
    } else {
        String::new()
    };
    CorrectnessOutcome {
        exit: out.status.code(),
        units: local.len(),
        mismatched,
        smoke,
        elapsed: start.elapsed(),
    }
}

pub struct CheckpointOutcome {
    pub exit: Option<i32>,
    pub total: usize,
    pub committed_at_kill: usize,
    pub in_flight_at_kill: usize,
    pub executed_ok: u64,
    /// Compiles that finished after the kill.
    pub recompiled: u64,
    pub dispatched: u64,
}

/// One single-slot daemon drops out after accepting half the units; two
/// fresh daemons finish the build.
pub fn scenario_checkpoint() -> CheckpointOutcome {
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), None);
    let corpus = corpus(tmp.path());
    let total = units(&corpus);
    let m = start_manager(&tmp.path().join("staging"), None);
    let half = (total / 2).to_string();
    let mut doomed = start_daemon(&m.addr, &tc, "doomed", 1, &["--fail-after", &half]);
    let manifest = corpus.join("project.manifest");
    let addr = m.addr.clone();
    let client = std::thread::spawn(move || build(&manifest, &addr, &[]));
    doomed.wait_exit(Duration::from_secs(120));
    let _finishers: Vec<Proc> = (0..2)
        .map(|i| start_daemon(&m.addr, &tc, &format!("late{i}"), 2, &[]))
        .collect();
    let out = client.join().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    let st = status(&m.addr, &job_id(&out));
    let loss = st
        .node_losses
        .first()
        .cloned()
        .expect("the loss was recorded");
    CheckpointOutcome {
        exit: out.status.code(),
        total,
        committed_at_kill: loss.committed_at,
        in_flight_at_kill: loss.in_flight,
        executed_ok: st.counters.executed_ok,
        recompiled: st.counters.executed_ok - loss.committed_at as u64,
        dispatched: st.counters.dispatched,
    }
}

pub struct CacheOutcome {
    pub first_exit: Option<i32>,
    pub second_exit: Option<i32>,
    pub total: usize,
    pub cache_hits: u64,
    pub dispatched: u64,
}

/// Builds twice against managers sharing one object cache but not their
/// staging areas, so the second build cannot resume from a checkpoint.
pub fn scenario_cache() -> CacheOutcome {
    let tmp = tempfile::tempdir().unwrap();
    let tc = toolchain_dir(tmp.path(), None);
    let corpus = corpus(tmp.path());
    let cache = tmp.path().join("cache");
    let manifest = corpus.join("project.manifest");
    let first = {
        let m = start_manager(&tmp.path().join("staging1"), Some(&cache));
        let _d: Vec<Proc> = (0..2)
            .map(|i| start_daemon(&m.addr, &tc, &format!("a{i}"), 2, &[]))
            .collect();
        build(&manifest, &m.addr, &[])
    };
    let m = start_manager(&tmp.path().join("staging2"), Some(&cache));
    let _d = start_daemon(&m.addr, &tc, "b0", 2, &[]);
    let second = build(&manifest, &m.addr, &[]);
    let st = second
        .status
        .success()
        .then(|| status(&m.addr, &job_id(&second)));
    CacheOutcome {
        first_exit: first.status.code(),
        second_exit: second.status.code(),
        total: units(&corpus),
        cache_hits: st.as_ref().map_or(0, |s| s.counters.cache_hits),
        dispatched: st.as_ref().map_or(u64::MAX, |s| s.counters.dispatched),
    }
}
