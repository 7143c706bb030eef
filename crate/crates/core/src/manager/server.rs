use std::collections::{HashMap, VecDeque};
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};

use crate::types::{NodeDescriptor, NodeId};
use crate::wire::{
    read_message_async, write_message_async, Ack, FetchedObject, Message, OfferReply, WireError,
};

use super::config::ManagerConfig;
use super::core::{ManagerCore, ManagerError, Outbound};

enum Event {
    Register {
        desc: NodeDescriptor,
        session: u64,
        tx: mpsc::UnboundedSender<Message>,
        reply: oneshot::Sender<Ack>,
    },
    FromNode {
        node: NodeId,
        session: u64,
        msg: Message,
    },
    NodeGone {
        node: NodeId,
        session: u64,
    },
    Client {
        msg: Message,
        reply: oneshot::Sender<Ack>,
    },
    Tick,
}

struct Link {
    session: u64,
    tx: mpsc::UnboundedSender<Message>,
}

/// The manager service: accepts daemon and client connections and drives a
/// [`ManagerCore`] from a single event loop.
pub struct ManagerServer {
    listener: TcpListener,
    core: ManagerCore,
}

impl ManagerServer {
    pub async fn bind(addr: &str, cfg: ManagerConfig) -> Result<Self, ManagerError> {
        let core = ManagerCore::new(cfg)?;
        let listener = TcpListener::bind(addr).await?;
        Ok(ManagerServer { listener, core })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> io::Result<()> {
        self.run_until(std::future::pending()).await
    }

    pub async fn run_until(self, shutdown: impl Future<Output = ()>) -> io::Result<()> {
        let ManagerServer { listener, core } = self;
        let (events, rx) = mpsc::unbounded_channel();
        let tick_every = (core.config().heartbeat_interval / 2).max(Duration::from_millis(10));
        let event_loop = tokio::spawn(event_loop(core, rx));
        let ticker = {
            let events = events.clone();
            tokio::spawn(async move {
                let mut iv = tokio::time::interval(tick_every);
                loop {
                    iv.tick().await;
                    if events.send(Event::Tick).is_err() {
                        break;
                    }
                }
            })
        };
        let mut sessions = 0u64;
        tokio::pin!(shutdown);
        let result = loop {
            tokio::select! {
                _ = &mut shutdown => break Ok(()),
                accepted = listener.accept() => match accepted {
                    Ok((stream, peer)) => {
                        sessions += 1;
                        let session = sessions;
                        let events = events.clone();
                        tokio::spawn(async move {
                            if let Err(e) = serve_connection(stream, session, events).await {
                                log::debug!("connection {peer}: {e}");
                            }
                        });
                    }
                    Err(e) => log::warn!("accept: {e}"),
                },
            }
        };
        ticker.abort();
        event_loop.abort();
        result
    }
}

async fn serve_connection(
    stream: TcpStream,
    session: u64,
    events: mpsc::UnboundedSender<Event>,
) -> Result<(), WireError> {
    stream.set_nodelay(true).ok();
    let (mut rd, mut wr) = stream.into_split();
    let first = read_message_async(&mut rd).await?;
    let Message::Register(reg) = first else {
        // Client session: strict request/reply.
        let mut msg = first;
        loop {
            let (reply, wait) = oneshot::channel();
            if events.send(Event::Client { msg, reply }).is_err() {
                return Ok(());
            }
            let ack = wait
                .await
                .unwrap_or_else(|_| Ack::error("Shutdown", "manager stopping"));
            write_message_async(&mut wr, &Message::Ack(ack)).await?;
            msg = match read_message_async(&mut rd).await {
                Ok(m) => m,
                Err(WireError::Closed) => return Ok(()),
                Err(e) => return Err(e),
            };
        }
    };

    let node = reg.node.node_id.clone();
    let (tx, mut outbox) = mpsc::unbounded_channel();
    let (reply, wait) = oneshot::channel();
    if events
        .send(Event::Register {
            desc: reg.node,
            session,
            tx,
            reply,
        })
        .is_err()
    {
        return Ok(());
    }
    let ack = wait
        .await
        .unwrap_or_else(|_| Ack::error("Shutdown", "manager stopping"));
    let accepted = ack.ok;
    write_message_async(&mut wr, &Message::Ack(ack)).await?;
    if !accepted {
        return Ok(());
    }
    let writer = tokio::spawn(async move {
        while let Some(msg) = outbox.recv().await {
            if write_message_async(&mut wr, &msg).await.is_err() {
                break;
            }
        }
    });
    let result = loop {
        match read_message_async(&mut rd).await {
            Ok(msg) => {
                if events
                    .send(Event::FromNode {
                        node: node.clone(),
                        session,
                        msg,
                    })
                    .is_err()
                {
                    break Ok(());
                }
            }
            Err(WireError::Closed) => break Ok(()),
            Err(e) => break Err(e),
        }
    };
    writer.abort();
    let _ = events.send(Event::NodeGone { node, session });
    result
}

async fn event_loop(mut core: ManagerCore, mut rx: mpsc::UnboundedReceiver<Event>) {
    let origin = Instant::now();
    let mut links: HashMap<NodeId, Link> = HashMap::new();
    while let Some(ev) = rx.recv().await {
        let now = origin.elapsed();
        let out = match ev {
            Event::Register {
                desc,
                session,
                tx,
                reply,
            } => {
                let id = desc.node_id.clone();
                match core.register_node(desc, now) {
                    Ok(out) => {
                        links.insert(id, Link { session, tx });
                        let _ = reply.send(Ack::ok());
                        out
                    }
                    Err(e) => {
                        let _ = reply.send(Ack::error(e.code(), e.to_string()));
                        Vec::new()
                    }
                }
            }
            Event::FromNode { node, session, msg } => {
                if links.get(&node).map(|l| l.session) != Some(session) {
                    continue;
                }
                from_node(&mut core, &links, &node, msg, now)
            }
            Event::NodeGone { node, session } => {
                if links.get(&node).map(|l| l.session) != Some(session) {
                    continue;
                }
                log::warn!("node {node} disconnected");
                links.remove(&node);
                core.node_lost(&node)
            }
            Event::Client { msg, reply } => {
                let (ack, out) = from_client(&mut core, msg, now);
                let _ = reply.send(ack);
                out
            }
            Event::Tick => {
                let (lost, out) = core.reap(now);
                for n in lost {
                    links.remove(&n);
                }
                out
            }
        };
        deliver(&mut core, &mut links, out);
    }
}

/// Sends outbound messages; an unreachable node is treated as lost, which
/// can produce further messages.
fn deliver(core: &mut ManagerCore, links: &mut HashMap<NodeId, Link>, out: Vec<Outbound>) {
    let mut out: VecDeque<Outbound> = out.into();
    while let Some(Outbound { to, msg }) = out.pop_front() {
        let sent = links.get(&to).is_some_and(|l| l.tx.send(msg).is_ok());
        if !sent {
            links.remove(&to);
            out.extend(core.node_lost(&to));
        }
    }
}

fn from_node(
    core: &mut ManagerCore,
    links: &HashMap<NodeId, Link>,
    node: &NodeId,
    msg: Message,
    now: Duration,
) -> Vec<Outbound> {
    let reply_to = |ack: Ack| {
        if let Some(l) = links.get(node) {
            let _ = l.tx.send(Message::Ack(ack));
        }
    };
    match msg {
        Message::Heartbeat(hb) if &hb.node_id == node => {
            core.heartbeat(&hb, now).unwrap_or_else(|e| {
                log::warn!("heartbeat from {node}: {e}");
                Vec::new()
            })
        }
        Message::TaskResult(res) => match core.task_result(node, res, now) {
            Ok(out) => {
                reply_to(Ack::ok());
                out
            }
            Err(e) => {
                log::error!("result from {node}: {e}");
                reply_to(Ack::error(e.code(), e.to_string()));
                Vec::new()
            }
        },
        Message::Ack(ack) => match ack.body::<OfferReply>() {
            Ok(r) => core.offer_reply(node, &r),
            Err(_) => Vec::new(),
        },
        other => {
            log::warn!("unexpected {} from node {node}", other.name());
            Vec::new()
        }
    }
}

fn from_client(core: &mut ManagerCore, msg: Message, now: Duration) -> (Ack, Vec<Outbound>) {
    let fail = |e: ManagerError| (Ack::error(e.code(), e.to_string()), Vec::new());
    match msg {
        Message::SubmitJob(req) => match core.submit_job(req, now) {
            Ok((id, out)) => match core.job_status(&id, now) {
                Ok(status) => (Ack::with(&status), out),
                Err(e) => fail(e),
            },
            Err(e) => fail(e),
        },
        Message::JobStatus(req) => match core.job_status(&req.job_id, now) {
            Ok(status) => (Ack::with(&status), Vec::new()),
            Err(e) => fail(e),
        },
        Message::FetchObject(req) => match core.fetch_object(&req.job_id, &req.tu_id) {
            Ok(object) => {
                let body = FetchedObject {
                    tu_id: req.tu_id,
                    digest: crate::digest::Digest::of(&object),
                    object,
                };
                (Ack::with(&body), Vec::new())
            }
            Err(e) => fail(e),
        },
        other => (
            Ack::error(
                "BadRequest",
                format!("{} is not a client request", other.name()),
            ),
            Vec::new(),
        ),
    }
}
