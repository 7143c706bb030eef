//! Framed wire protocol between client, manager and daemons.
//!
//! ```text
//! +----------------------+-----------+------------------------------+
//! | payload length (u32) | msg_type  | payload: UTF-8 JSON text     |
//! | big-endian           | (u8)      | (length bytes)               |
//! +----------------------+-----------+------------------------------+
//! ```
//!
//! | type | message      | direction                        |
//! |------|--------------|----------------------------------|
//! | 1    | Register     | daemon -> manager                |
//! | 2    | Heartbeat    | daemon -> manager                |
//! | 3    | SubmitJob    | client -> manager                |
//! | 4    | ExecuteTask  | manager -> daemon                |
//! | 5    | TaskResult   | daemon -> manager                |
//! | 6    | JobStatus    | client -> manager                |
//! | 7    | FetchObject  | client -> manager                |
//! | 8    | SetPriority  | manager -> daemon                |
//! | 9    | Ack          | any reply; carries errors too    |
//!
//! Binary blobs (sources, objects) travel base64-encoded inside the JSON.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::digest::Digest;
use crate::types::{JobId, NodeDescriptor, NodeId, SchedulingClass, TargetTriple, TuId};
use crate::xmapper::ToolchainId;

/// Largest object file carried inline in a result.
pub const MAX_OBJECT_BYTES: usize = 64 * 1024 * 1024;
/// Largest frame payload: a maximal object after base64 plus JSON framing.
pub const MAX_FRAME_BYTES: u32 = 96 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_BYTES}-byte limit")]
    TooLarge(u64),
    #[error("malformed {ty} payload: {source}")]
    Payload {
        ty: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Register {
    pub node: NodeDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub node_id: NodeId,
    pub load: f64,
    pub user_active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitUnit {
    pub tu_id: TuId,
    pub source_digest: Digest,
    pub compile_args: Vec<String>,
    /// Extension the preprocessed source is compiled under: `i` or `ii`.
    pub source_ext: String,
    #[serde(with = "b64")]
    pub source: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitJob {
    pub target: TargetTriple,
    pub units: Vec<SubmitUnit>,
    #[serde(default)]
    pub allow_mixed: bool,
    #[serde(default)]
    pub class: Option<SchedulingClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecuteTask {
    pub job_id: JobId,
    pub tu_id: TuId,
    pub toolchain: ToolchainId,
    pub compile_args: Vec<String>,
    pub source_ext: String,
    #[serde(with = "b64")]
    pub source: Vec<u8>,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskOutcome {
    Object {
        digest: Digest,
        #[serde(with = "b64")]
        object: Vec<u8>,
    },
    Error {
        exit_code: Option<i32>,
        stderr: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub job_id: JobId,
    pub tu_id: TuId,
    pub outcome: TaskOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatusRequest {
    pub job_id: JobId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchObject {
    pub job_id: JobId,
    pub tu_id: TuId,
}

/// Reply body for [`FetchObject`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchedObject {
    pub tu_id: TuId,
    pub digest: Digest,
    #[serde(with = "b64")]
    pub object: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    RealTime,
    Lowest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetPriority {
    pub mode: PriorityMode,
}

/// Reply to any request. `result` carries the request-specific body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
}

impl Ack {
    pub fn ok() -> Self {
        Ack {
            ok: true,
            code: None,
            message: None,
            result: None,
        }
    }

    pub fn with<T: Serialize>(body: &T) -> Self {
        Ack {
            ok: true,
            code: None,
            message: None,
            result: Some(serde_json::to_value(body).expect("reply bodies serialize")),
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Ack {
            ok: false,
            code: Some(code.to_owned()),
            message: Some(message.into()),
            result: None,
        }
    }

    /// Decodes the body of a successful reply.
    pub fn body<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_value(self.result.clone().unwrap_or(serde_json::Value::Null))
    }
}

/// A daemon's answer to an [`ExecuteTask`] offer, sent as an [`Ack`] body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferReply {
    pub job_id: JobId,
    pub tu_id: TuId,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Register(Register),
    Heartbeat(Heartbeat),
    SubmitJob(SubmitJob),
    ExecuteTask(ExecuteTask),
    TaskResult(TaskResult),
    JobStatus(JobStatusRequest),
    FetchObject(FetchObject),
    SetPriority(SetPriority),
    Ack(Ack),
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Register(_) => 1,
            Message::Heartbeat(_) => 2,
            Message::SubmitJob(_) => 3,
            Message::ExecuteTask(_) => 4,
            Message::TaskResult(_) => 5,
            Message::JobStatus(_) => 6,
            Message::FetchObject(_) => 7,
            Message::SetPriority(_) => 8,
            Message::Ack(_) => 9,
        }
    }

    pub fn name(&self) -> &'static str {
        type_name(self.type_byte()).expect("every variant has a name")
    }

    fn payload(&self) -> Vec<u8> {
        let r = match self {
            Message::Register(m) => serde_json::to_vec(m),
            Message::Heartbeat(m) => serde_json::to_vec(m),
            Message::SubmitJob(m) => serde_json::to_vec(m),
            Message::ExecuteTask(m) => serde_json::to_vec(m),
            Message::TaskResult(m) => serde_json::to_vec(m),
            Message::JobStatus(m) => serde_json::to_vec(m),
            Message::FetchObject(m) => serde_json::to_vec(m),
            Message::SetPriority(m) => serde_json::to_vec(m),
            Message::Ack(m) => serde_json::to_vec(m),
        };
        r.expect("protocol messages serialize")
    }

    /// Full frame: header followed by the JSON payload.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut frame = Vec::with_capacity(5 + payload.len());
        frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        frame.push(self.type_byte());
        frame.extend_from_slice(&payload);
        frame
    }

    pub fn decode(ty: u8, payload: &[u8]) -> Result<Message, WireError> {
        let name = type_name(ty).ok_or(WireError::UnknownType(ty))?;
        let err = |source| WireError::Payload { ty: name, source };
        Ok(match ty {
            1 => Message::Register(serde_json::from_slice(payload).map_err(err)?),
            2 => Message::Heartbeat(serde_json::from_slice(payload).map_err(err)?),
            3 => Message::SubmitJob(serde_json::from_slice(payload).map_err(err)?),
            4 => Message::ExecuteTask(serde_json::from_slice(payload).map_err(err)?),
            5 => Message::TaskResult(serde_json::from_slice(payload).map_err(err)?),
            6 => Message::JobStatus(serde_json::from_slice(payload).map_err(err)?),
            7 => Message::FetchObject(serde_json::from_slice(payload).map_err(err)?),
            8 => Message::SetPriority(serde_json::from_slice(payload).map_err(err)?),
            9 => Message::Ack(serde_json::from_slice(payload).map_err(err)?),
            _ => unreachable!("type_name accepted {ty}"),
        })
    }
}

fn type_name(ty: u8) -> Option<&'static str> {
    Some(match ty {
        1 => "Register",
        2 => "Heartbeat",
        3 => "SubmitJob",
        4 => "ExecuteTask",
        5 => "TaskResult",
        6 => "JobStatus",
        7 => "FetchObject",
        8 => "SetPriority",
        9 => "Ack",
        _ => return None,
    })
}

fn check_len(len: u32) -> Result<usize, WireError> {
    if len > MAX_FRAME_BYTES {
        Err(WireError::TooLarge(len as u64))
    } else {
        Ok(len as usize)
    }
}

/// Reads one frame. A clean EOF before the header is [`WireError::Closed`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut header = [0u8; 5];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(WireError::Closed),
        Err(e) => return Err(e.into()),
    }
    let len = check_len(u32::from_be_bytes(header[..4].try_into().unwrap()))?;
    let ty = header[4];
    type_name(ty).ok_or(WireError::UnknownType(ty))?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Message::decode(ty, &payload)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    w.write_all(&msg.encode())?;
    w.flush()?;
    Ok(())
}

pub async fn read_message_async<R: AsyncRead + Unpin>(r: &mut R) -> Result<Message, WireError> {
    let mut header = [0u8; 5];
    match r.read_exact(&mut header).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(WireError::Closed),
        Err(e) => return Err(e.into()),
    }
    let len = check_len(u32::from_be_bytes(header[..4].try_into().unwrap()))?;
    let ty = header[4];
    type_name(ty).ok_or(WireError::UnknownType(ty))?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).await?;
    Message::decode(ty, &payload)
}

pub async fn write_message_async<W: AsyncWrite + Unpin>(
    w: &mut W,
    msg: &Message,
) -> Result<(), WireError> {
    w.write_all(&msg.encode()).await?;
    w.flush().await?;
    Ok(())
}
