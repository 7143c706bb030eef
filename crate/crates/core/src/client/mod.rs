//! The build client: splits a project into units, preprocesses them
//! locally, has the farm compile them and links the result.
//!
//! Exit codes used by the `distcom` binary:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 2    | preprocessing, compilation or link failed |
//! | 3    | no compatible node                        |
//! | 4    | transport failure                         |

mod build;
mod invocation;
mod manifest;

use std::path::Path;
use std::process::Command;
use std::time::Duration;

pub use self::build::{
    build, link, object_name, preprocess_all, BuildOptions, BuildReport, ManagerClient,
};
pub use self::invocation::{
    classify_invocation, preprocess, preprocessed_ext, InvocationPlan, PlanKind,
};
pub use self::manifest::{Manifest, ManifestUnit};

use crate::digest::Digest;
use crate::types::{TargetTriple, TuId};
use crate::wire::{SubmitJob, SubmitUnit};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("preprocessing {tu} failed: {stderr}")]
    PreprocessFailed { tu: String, stderr: String },
    #[error("no compatible node: {0}")]
    NoCompatibleNode(String),
    #[error("build failed: {0}")]
    JobFailed(String),
    #[error("link failed: {0}")]
    LinkFailed(String),
    #[error("manager refused request: {code}: {message}")]
    Rejected { code: String, message: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("{0}")]
    Io(String),
}

impl ClientError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::NoCompatibleNode(_) => 3,
            ClientError::Transport(_) | ClientError::Rejected { .. } => 4,
            _ => 2,
        }
    }
}

/// The host compiler's target, as reported by `-dumpmachine`.
pub fn compiler_target(compiler: &str) -> Result<TargetTriple, ClientError> {
    let out = Command::new(compiler)
        .arg("-dumpmachine")
        .output()
        .map_err(|e| ClientError::Io(format!("{compiler}: {e}")))?;
    String::from_utf8_lossy(&out.stdout)
        .trim()
        .parse()
        .map_err(|e| ClientError::Io(format!("{compiler} -dumpmachine: {e}")))
}

/// Drop-in compiler wrapper. Local-only commands run unchanged and their
/// exit status is returned; single-unit compiles go to the farm.
pub fn wrap_compile(
    argv: &[String],
    opts: &BuildOptions,
    target: Option<TargetTriple>,
) -> Result<i32, ClientError> {
    let plan = classify_invocation(argv);
    if !plan.is_distributable() {
        log::debug!("running locally: {}", plan.reason.unwrap_or("local"));
        let status = Command::new(&argv[0])
            .args(&argv[1..])
            .status()
            .map_err(|e| ClientError::Io(format!("{}: {e}", argv[0])))?;
        return Ok(status.code().unwrap_or(1));
    }
    let source = plan
        .source
        .as_deref()
        .expect("distributable plans have a source");
    let target = match target {
        Some(t) => t,
        None => compiler_target(&plan.compiler)?,
    };
    let pre = preprocess(
        &plan.compiler,
        source,
        &plan.preprocess_flags,
        Path::new("."),
    )?;
    let tu_id = TuId::new(source.to_string_lossy()).map_err(|e| ClientError::Io(e.to_string()))?;
    let unit = SubmitUnit {
        tu_id: tu_id.clone(),
        source_digest: Digest::of(&pre),
        compile_args: plan.compile_flags.clone(),
        source_ext: plan.preprocessed_ext().to_owned(),
        source: pre,
    };
    let mut conn = ManagerClient::connect(&opts.manager, opts.connect_timeout)?;
    let st = conn.submit(SubmitJob {
        target,
        units: vec![unit],
        allow_mixed: opts.allow_mixed,
        class: opts.class,
    })?;
    conn.wait(
        &st.job_id,
        opts.poll_interval.min(Duration::from_millis(50)),
        opts.timeout,
    )?;
    let object = conn.fetch(&st.job_id, &tu_id)?;
    let out = plan
        .object_path()
        .expect("distributable plans have an object path");
    std::fs::write(&out, object).map_err(|e| ClientError::Io(format!("{}: {e}", out.display())))?;
    Ok(0)
}
