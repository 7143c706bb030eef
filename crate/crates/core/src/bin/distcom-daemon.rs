//! Per-node compile service.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use distcom::daemon::{run_daemon, ActivityProbe, DaemonConfig, DaemonError, ScriptedTrace};
use distcom::{NodeId, SchedulingClass};

#[derive(Parser, Debug)]
#[command(
    name = "distcom-daemon",
    version,
    about = "Registers this machine with a manager and compiles units for it"
)]
struct Args {
    /// Manager address.
    #[arg(long)]
    manager: String,
    /// Directory holding one subdirectory with a toolchain.meta per toolchain.
    #[arg(long)]
    toolchains: PathBuf,
    /// dedicated or shared.
    #[arg(long, default_value = "dedicated")]
    class: SchedulingClass,
    /// Scripted user-presence trace (`<seconds> <0|1>` per line) instead of
    /// watching input devices.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Number of compile slots to advertise.
    #[arg(long)]
    cpus: Option<u32>,
    /// Node id to register under (defaults to the hostname).
    #[arg(long)]
    node_id: Option<String>,
    #[arg(long, default_value_t = 2000)]
    heartbeat_ms: u64,
    /// Drop the connection right after accepting this many tasks.
    #[arg(long)]
    fail_after: Option<u32>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut cfg = DaemonConfig::new(args.manager, args.toolchains, args.class);
    if let Some(path) = &args.trace {
        let trace = std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| ScriptedTrace::parse(&t).map_err(|e| e.to_string()));
        match trace {
            Ok(t) => cfg.activity = ActivityProbe::ScriptedTrace(t),
            Err(e) => {
                eprintln!("distcom-daemon: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
    }
    if let Some(id) = args.node_id {
        match NodeId::new(id) {
            Ok(id) => cfg.overrides.node_id = Some(id),
            Err(e) => {
                eprintln!("distcom-daemon: {e}");
                return ExitCode::from(2);
            }
        }
    }
    cfg.overrides.cpu_count = args.cpus;
    cfg.heartbeat_interval = Duration::from_millis(args.heartbeat_ms.max(1));
    cfg.fail_after = args.fail_after;

    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    match rt.block_on(run_daemon(cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DaemonError::FaultInjected) => {
            log::warn!("fault injected; exiting");
            // Leave running compiles behind without waiting for them.
            std::process::exit(9)
        }
        Err(e) => {
            eprintln!("distcom-daemon: {e}");
            ExitCode::from(match e {
                DaemonError::NoToolchainFound(_) | DaemonError::Meta(_) => 2,
                _ => 1,
            })
        }
    }
}
