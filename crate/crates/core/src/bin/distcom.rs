//! Build client and fleet simulator.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use distcom::client::{build, wrap_compile, BuildOptions, ClientError, Manifest};
use distcom::simnet::{csv_string, run_scenario, sweep, sweep_rows, Axis, CsvRow, Scenario};
use distcom::SchedulingClass;

#[derive(Parser, Debug)]
#[command(
    name = "distcom",
    version,
    about = "Distributed compilation client and simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Debug)]
struct FarmArgs {
    /// Manager address.
    #[arg(long, env = "DISTCOM_MANAGER", default_value = "127.0.0.1:7400")]
    manager: String,
    /// Accept nodes whose compiler versions disagree.
    #[arg(long)]
    allow_mixed: bool,
    /// Ask for the dedicated or shared queue.
    #[arg(long)]
    class: Option<SchedulingClass>,
    /// Give up after this many seconds.
    #[arg(long)]
    timeout: Option<u64>,
}

impl FarmArgs {
    fn options(&self) -> BuildOptions {
        let mut o = BuildOptions::new(self.manager.clone());
        o.allow_mixed = self.allow_mixed;
        o.class = self.class;
        o.timeout = self.timeout.map(Duration::from_secs);
        o
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build a project manifest on the farm and link it locally.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        /// Parallel local preprocessing jobs.
        #[arg(long, short)]
        jobs: Option<usize>,
        #[command(flatten)]
        farm: FarmArgs,
    },
    /// Compiler wrapper: `distcom cc -- gcc -O2 -c x.c -o x.o`.
    Cc {
        #[command(flatten)]
        farm: FarmArgs,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true)]
        argv: Vec<String>,
    },
    /// Run a simulated fleet.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        /// `<axis>=<v1,v2,...>` with axis node_count, policy,
        /// cache_redundancy or virtualization_overhead.
        #[arg(long)]
        sweep: Option<String>,
        /// CSV output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn client_exit(e: ClientError) -> ExitCode {
    eprintln!("distcom: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Build {
            manifest,
            jobs,
            farm,
        } => {
            let m = match Manifest::load(&manifest) {
                Ok(m) => m,
                Err(e) => return client_exit(e),
            };
            let mut opts = farm.options();
            if let Some(j) = jobs {
                opts.jobs = j.max(1);
            }
            match build(&m, &opts) {
                Ok(r) => {
                    let c = &r.status.counters;
                    println!(
                        "job {} complete: {} units, {} dispatched, {} requeued, {} cache hits, {} restored in {:.2?}",
                        r.job_id, r.status.total, c.dispatched, c.requeued, c.cache_hits, c.restored, r.elapsed
                    );
                    println!("output {}", r.output.display());
                    ExitCode::SUCCESS
                }
                Err(e) => client_exit(e),
            }
        }
        Cmd::Cc { farm, argv } => match wrap_compile(&argv, &farm.options(), None) {
            Ok(code) => ExitCode::from(code.clamp(0, 255) as u8),
            Err(e) => client_exit(e),
        },
        Cmd::Sim {
            scenario,
            sweep: axis,
            out,
        } => match simulate(&scenario, axis.as_deref(), out.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("distcom: {e}");
                ExitCode::from(2)
            }
        },
    }
}

fn simulate(
    path: &std::path::Path,
    axis: Option<&str>,
    out: Option<&std::path::Path>,
) -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::load(path)?;
    let rows = match axis {
        Some(spec) => {
            let (axis, values) = spec
                .split_once('=')
                .ok_or("--sweep expects <axis>=<v1,v2,...>")?;
            let axis: Axis = axis.parse()?;
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_owned())
                .filter(|v| !v.is_empty())
                .collect();
            sweep_rows(&sc.name, &sweep(&sc, axis, &values)?)
        }
        None => vec![CsvRow::new(&sc.name, "", &run_scenario(&sc)?)],
    };
    let text = csv_string(&rows);
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
