//! Coordinator for a compile farm.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use distcom::manager::{ManagerConfig, ManagerServer};
use distcom::Policy;

#[derive(Parser, Debug)]
#[command(
    name = "distcom-manager",
    version,
    about = "Accepts daemons and build jobs and schedules compiles"
)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7400")]
    listen: String,
    /// Scheduling policy: dedicated, shared or hybrid.
    #[arg(long)]
    policy: Option<Policy>,
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for staged objects and checkpoint logs.
    #[arg(long)]
    staging: Option<PathBuf>,
    /// Object cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Heartbeat interval in milliseconds.
    #[arg(long)]
    heartbeat_ms: Option<u64>,
    /// Accept jobs whose nodes disagree on compiler version.
    #[arg(long)]
    allow_mixed: bool,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(path) => match ManagerConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("distcom-manager: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => ManagerConfig::new("distcom-staging"),
    };
    if let Some(p) = args.policy {
        cfg.policy.policy = p;
    }
    if let Some(s) = args.staging {
        cfg.staging_dir = s;
    }
    if let Some(c) = args.cache_dir {
        cfg.cache_dir = Some(c);
    }
    if let Some(ms) = args.heartbeat_ms {
        cfg.heartbeat_interval = std::time::Duration::from_millis(ms.max(1));
    }
    cfg.allow_mixed |= args.allow_mixed;

    let server = match ManagerServer::bind(&args.listen, cfg).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("distcom-manager: {e}");
            return ExitCode::from(2);
        }
    };
    match server.local_addr() {
        Ok(addr) => println!("listening on {addr}"),
        Err(e) => log::warn!("local address unavailable: {e}"),
    }
    let shutdown = async {
        tokio::signal::ctrl_c().await.ok();
    };
    match server.run_until(shutdown).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("distcom-manager: {e}");
            ExitCode::from(1)
        }
    }
}
