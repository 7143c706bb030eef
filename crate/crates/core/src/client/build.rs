use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::digest::Digest;
use crate::manager::{JobPhase, JobStatus};
use crate::types::{JobId, SchedulingClass, TuId};
use crate::wire::{
    read_message, write_message, Ack, FetchObject, FetchedObject, JobStatusRequest, Message,
    SubmitJob, SubmitUnit,
};

use super::invocation::{preprocess, preprocessed_ext};
use super::manifest::Manifest;
use super::ClientError;

/// A synchronous request/reply connection to the manager.
pub struct ManagerClient {
    stream: TcpStream,
}

impl ManagerClient {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ClientError> {
        let transport = |e: std::io::Error| ClientError::Transport(format!("{addr}: {e}"));
        let sock = addr
            .to_socket_addrs()
            .map_err(transport)?
            .next()
            .ok_or_else(|| ClientError::Transport(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(transport)?;
        stream.set_nodelay(true).ok();
        Ok(ManagerClient { stream })
    }

    pub fn request(&mut self, msg: &Message) -> Result<Ack, ClientError> {
        let t = |e: crate::wire::WireError| ClientError::Transport(e.to_string());
        write_message(&mut self.stream, msg).map_err(t)?;
        match read_message(&mut self.stream).map_err(t)? {
            Message::Ack(a) => Ok(a),
            other => Err(ClientError::Transport(format!(
                "unexpected {} reply",
                other.name()
            ))),
        }
    }

    fn expect_ok(ack: Ack) -> Result<Ack, ClientError> {
        if ack.ok {
            return Ok(ack);
        }
        let code = ack.code.unwrap_or_default();
        let message = ack.message.unwrap_or_default();
        Err(match code.as_str() {
            "NoCompatibleNode" | "MixedVersions" => ClientError::NoCompatibleNode(message),
            _ => ClientError::Rejected { code, message },
        })
    }

    fn body<T: serde::de::DeserializeOwned>(ack: Ack) -> Result<T, ClientError> {
        ack.body()
            .map_err(|e| ClientError::Transport(format!("malformed reply: {e}")))
    }

    pub fn submit(&mut self, job: SubmitJob) -> Result<JobStatus, ClientError> {
        Self::body(Self::expect_ok(self.request(&Message::SubmitJob(job))?)?)
    }

    pub fn status(&mut self, job_id: &JobId) -> Result<JobStatus, ClientError> {
        let req = Message::JobStatus(JobStatusRequest {
            job_id: job_id.clone(),
        });
        Self::body(Self::expect_ok(self.request(&req)?)?)
    }

    /// Fetches an object and checks it against its digest.
    pub fn fetch(&mut self, job_id: &JobId, tu: &TuId) -> Result<Vec<u8>, ClientError> {
        let req = Message::FetchObject(FetchObject {
            job_id: job_id.clone(),
            tu_id: tu.clone(),
        });
        let got: FetchedObject = Self::body(Self::expect_ok(self.request(&req)?)?)?;
        if Digest::of(&got.object) != got.digest {
            return Err(ClientError::Transport(format!(
                "object for {tu} failed its digest check"
            )));
        }
        Ok(got.object)
    }

    /// Polls until the job completes or fails.
    pub fn wait(
        &mut self,
        job_id: &JobId,
        poll: Duration,
        timeout: Option<Duration>,
    ) -> Result<JobStatus, ClientError> {
        let start = Instant::now();
        loop {
            let st = self.status(job_id)?;
            match st.phase {
                JobPhase::Complete => return Ok(st),
                JobPhase::Failed => {
                    return Err(ClientError::JobFailed(
                        st.failure.unwrap_or_else(|| "job failed".into()),
                    ))
                }
                JobPhase::Compiling => {}
            }
            if timeout.is_some_and(|t| start.elapsed() > t) {
                return Err(ClientError::Transport(format!(
                    "job {job_id} still running after {:?}",
                    start.elapsed()
                )));
            }
            std::thread::sleep(poll);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub manager: String,
    /// Parallel preprocessing workers.
    pub jobs: usize,
    pub allow_mixed: bool,
    pub class: Option<SchedulingClass>,
    pub poll_interval: Duration,
    pub connect_timeout: Duration,
    pub timeout: Option<Duration>,
    /// Where fetched objects go; defaults to `<root>/.distcom/obj`.
    pub object_dir: Option<PathBuf>,
}

impl BuildOptions {
    pub fn new(manager: impl Into<String>) -> Self {
        BuildOptions {
            manager: manager.into(),
            jobs: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            allow_mixed: false,
            class: None,
            poll_interval: Duration::from_millis(100),
            connect_timeout: Duration::from_secs(5),
            timeout: None,
            object_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub job_id: JobId,
    pub status: JobStatus,
    pub objects: Vec<PathBuf>,
    pub output: PathBuf,
    pub elapsed: Duration,
}

/// Preprocesses every unit with up to `jobs` workers, in manifest order.
pub fn preprocess_all(manifest: &Manifest, jobs: usize) -> Result<Vec<SubmitUnit>, ClientError> {
    let next = Mutex::new(0usize);
    let results: Vec<Mutex<Option<Result<SubmitUnit, ClientError>>>> =
        manifest.units.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, manifest.units.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("poisoned");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(unit) = manifest.units.get(i) else {
                    break;
                };
                let r = preprocess(
                    &manifest.compiler,
                    &unit.source,
                    &unit.flags,
                    &manifest.root,
                )
                .map(|source| {
                    let plan =
                        super::classify_invocation(&manifest.compile_argv(unit, Path::new("x.o")));
                    SubmitUnit {
                        tu_id: unit.tu_id(),
                        source_digest: Digest::of(&source),
                        compile_args: plan.compile_flags,
                        source_ext: preprocessed_ext(&unit.source).to_owned(),
                        source,
                    }
                });
                *results[i].lock().expect("poisoned") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("poisoned")
                .expect("every unit processed")
        })
        .collect()
}

/// Object file name for a unit under the object directory.
pub fn object_name(tu: &TuId) -> PathBuf {
    let flat: String = tu
        .as_str()
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    PathBuf::from(flat).with_extension("o")
}

/// Preprocess, submit, wait, fetch, link.
pub fn build(manifest: &Manifest, opts: &BuildOptions) -> Result<BuildReport, ClientError> {
    let start = Instant::now();
    manifest.validate_units()?;
    let units = preprocess_all(manifest, opts.jobs)?;
    let mut conn = ManagerClient::connect(&opts.manager, opts.connect_timeout)?;
    let submitted = conn.submit(SubmitJob {
        target: manifest.target.clone(),
        units,
        allow_mixed: opts.allow_mixed,
        class: opts.class.or(manifest.class),
    })?;
    let job_id = submitted.job_id.clone();
    log::info!(
        "job {job_id}: {} units, {} restored",
        submitted.total,
        submitted.counters.restored
    );
    let status = conn.wait(&job_id, opts.poll_interval, opts.timeout)?;

    let obj_dir = opts
        .object_dir
        .clone()
        .unwrap_or_else(|| manifest.root.join(".distcom").join("obj"));
    std::fs::create_dir_all(&obj_dir)
        .map_err(|e| ClientError::Io(format!("{}: {e}", obj_dir.display())))?;
    let mut objects = Vec::new();
    for unit in &manifest.units {
        let tu = unit.tu_id();
        let bytes = conn.fetch(&job_id, &tu)?;
        let path = obj_dir.join(object_name(&tu));
        std::fs::write(&path, bytes)
            .map_err(|e| ClientError::Io(format!("{}: {e}", path.display())))?;
        let path = if path.is_absolute() {
            path
        } else {
            std::env::current_dir()
                .map_err(|e| ClientError::Io(e.to_string()))?
                .join(path)
        };
        objects.push(path);
    }
    link(manifest, &objects)?;
    Ok(BuildReport {
        job_id,
        status,
        objects,
        output: manifest.root.join(&manifest.output),
        elapsed: start.elapsed(),
    })
}

pub fn link(manifest: &Manifest, objects: &[PathBuf]) -> Result<(), ClientError> {
    let argv = manifest.link_argv(objects);
    let out = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(&manifest.root)
        .output()
        .map_err(|e| ClientError::LinkFailed(format!("{}: {e}", argv[0])))?;
    if !out.status.success() {
        return Err(ClientError::LinkFailed(
            String::from_utf8_lossy(&out.stderr).into_owned(),
        ));
    }
    Ok(())
}
