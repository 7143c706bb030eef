use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::net::TcpStream;
use tokio::sync::mpsc;

use crate::types::SchedulingClass;
use crate::wire::{
    read_message_async, write_message_async, Ack, Heartbeat, Message, OfferReply, Register,
    WireError,
};

use super::activity::ActivityProbe;
use super::exec::{Executor, Slots};
use super::priority::{select_priority, PriorityControl, PriorityState};
use super::probe::{probe_node, read_load, ProbeOverrides};
use super::DaemonError;

pub struct DaemonConfig {
    pub manager: String,
    pub toolchain_dir: PathBuf,
    pub class: SchedulingClass,
    pub activity: ActivityProbe,
    pub overrides: ProbeOverrides,
    pub heartbeat_interval: Duration,
    /// Drop the connection right after accepting this many tasks.
    pub fail_after: Option<u32>,
    pub priority: Box<dyn PriorityControl>,
}

impl DaemonConfig {
    pub fn new(
        manager: impl Into<String>,
        toolchain_dir: impl Into<PathBuf>,
        class: SchedulingClass,
    ) -> Self {
        DaemonConfig {
            manager: manager.into(),
            toolchain_dir: toolchain_dir.into(),
            class,
            activity: ActivityProbe::real(),
            overrides: ProbeOverrides::default(),
            heartbeat_interval: Duration::from_secs(2),
            fail_after: None,
            priority: Box::new(super::priority::OsPriority::new()),
        }
    }
}

/// Registers with the manager and serves tasks until the connection ends.
pub async fn run_daemon(cfg: DaemonConfig) -> Result<(), DaemonError> {
    let (mut desc, toolchains) = probe_node(&cfg.toolchain_dir, cfg.class, &cfg.overrides)?;
    let started = Instant::now();
    desc.user_active = cfg.activity.user_active(Duration::ZERO);
    let node_id = desc.node_id.clone();
    let cpus = desc.cpu_count;
    let stream = TcpStream::connect(&cfg.manager)
        .await
        .map_err(|e| DaemonError::Io(format!("{}: {e}", cfg.manager)))?;
    stream.set_nodelay(true).ok();
    let (mut rd, mut wr) = stream.into_split();
    write_message_async(&mut wr, &Message::Register(Register { node: desc.clone() })).await?;
    match read_message_async(&mut rd).await? {
        Message::Ack(Ack { ok: true, .. }) => {}
        Message::Ack(a) => {
            return Err(DaemonError::Rejected {
                code: a.code.unwrap_or_default(),
                message: a.message.unwrap_or_default(),
            })
        }
        other => {
            return Err(DaemonError::Io(format!(
                "unexpected {} during registration",
                other.name()
            )))
        }
    }
    log::info!(
        "registered as {node_id} with {cpus} slot(s) and {} toolchain(s)",
        toolchains.len()
    );

    let priority = Arc::new(PriorityState::new(cfg.priority));
    priority.set_mode(select_priority(desc.user_active, cfg.class));
    let exec = Arc::new(Executor {
        toolchains,
        slots: Slots::new(cpus as usize),
        priority: Arc::clone(&priority),
    });

    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Message>();
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if write_message_async(&mut wr, &msg).await.is_err() {
                break;
            }
        }
    });

    let heartbeat = {
        let out = out_tx.clone();
        let activity = cfg.activity.clone();
        let priority = Arc::clone(&priority);
        let class = cfg.class;
        let node_id = node_id.clone();
        let every = cfg.heartbeat_interval;
        tokio::spawn(async move {
            let mut iv = tokio::time::interval(every);
            loop {
                iv.tick().await;
                let user_active = activity.user_active(started.elapsed());
                priority.set_mode(select_priority(user_active, class));
                let hb = Heartbeat {
                    node_id: node_id.clone(),
                    load: read_load(cpus),
                    user_active,
                };
                if out.send(Message::Heartbeat(hb)).is_err() {
                    break;
                }
            }
        })
    };

    let mut accepted = 0u32;
    let result = loop {
        let msg = match read_message_async(&mut rd).await {
            Ok(m) => m,
            Err(WireError::Closed) => break Ok(()),
            Err(e) => break Err(e.into()),
        };
        match msg {
            Message::ExecuteTask(task) => {
                let admitted = exec.admit(&task);
                let reply = OfferReply {
                    job_id: task.job_id.clone(),
                    tu_id: task.tu_id.clone(),
                    accepted: admitted.is_ok(),
                };
                let _ = out_tx.send(Message::Ack(Ack::with(&reply)));
                let slot = match admitted {
                    Ok(slot) => slot,
                    Err(e) => {
                        log::info!("declined {}: {e}", task.tu_id);
                        continue;
                    }
                };
                accepted += 1;
                if cfg.fail_after.is_some_and(|n| accepted >= n) {
                    log::warn!("fault injection: dropping out after {accepted} task(s)");
                    break Err(DaemonError::FaultInjected);
                }
                let exec = Arc::clone(&exec);
                let out = out_tx.clone();
                tokio::spawn(async move {
                    let res = tokio::task::spawn_blocking(move || exec.run(slot, &task)).await;
                    if let Ok(res) = res {
                        let _ = out.send(Message::TaskResult(res));
                    }
                });
            }
            Message::SetPriority(p) => priority.set_mode(p.mode),
            Message::Ack(a) if !a.ok => log::warn!("manager: {:?} {:?}", a.code, a.message),
            Message::Ack(_) => {}
            other => log::warn!("unexpected {} from manager", other.name()),
        }
    };
    heartbeat.abort();
    drop(out_tx);
    if result.is_ok() {
        let _ = writer.await;
    } else {
        writer.abort();
    }
    result
}
