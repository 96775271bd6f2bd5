//! Client for external detector processes speaking line-delimited JSON over
//! stdin/stdout.
//!
//! ```text
//! bridge -> {"protocol": 1, "classes": [0, 1, 2], "max_input_px": 4096}
//! client -> {"id": 7, "image": "/data/a.png", "window": [x0, y0, w, h]}
//! bridge -> {"id": 7, "detections": [{"class": 1, "bbox": [..], "conf": 0.8}]}
//!         | {"id": 7, "error": "message"}
//! ```
//!
//! Boxes in responses are window-local pixels. Responses may arrive out of
//! order; they are matched by id.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendError, Capabilities, DetectorBackend, WindowRequest};
use crate::nms::Detection;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("empty bridge command")]
    EmptyCommand,
    #[error("cannot start bridge `{program}`: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("bridge exited before sending its handshake")]
    NoHandshake,
    #[error("malformed handshake {line:?}: {reason}")]
    BadHandshake { line: String, reason: String },
    #[error("bridge speaks protocol {0}, expected {PROTOCOL_VERSION}")]
    ProtocolMismatch(u32),
    #[error("bridge i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: u32,
    pub classes: Vec<u32>,
    pub max_input_px: u32,
    /// Bridges are sequential unless they say otherwise.
    #[serde(default = "single_flight_default")]
    pub single_flight: bool,
}

fn single_flight_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: u64,
    pub image: PathBuf,
    pub window: [u32; 4],
}

/// Either `detections` or `error` is present, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeResponse {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeResponse {
    pub fn parse(line: &str) -> Result<Self, String> {
        let resp: BridgeResponse = serde_json::from_str(line).map_err(|e| e.to_string())?;
        match (&resp.detections, &resp.error) {
            (Some(_), None) | (None, Some(_)) => Ok(resp),
            _ => Err("response must carry exactly one of `detections` or `error`".into()),
        }
    }
}

struct BridgeIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    /// Responses that arrived for other request ids.
    stash: HashMap<u64, BridgeResponse>,
}

impl BridgeIo {
    fn read_line(&mut self) -> Result<String, String> {
        let mut line = String::new();
        match self.stdout.read_line(&mut line) {
            Ok(0) => Err("bridge closed its output".into()),
            Ok(_) => Ok(line.trim_end().to_string()),
            Err(e) => Err(e.to_string()),
        }
    }

    fn round_trip(&mut self, req: &BridgeRequest) -> Result<BridgeResponse, String> {
        let mut msg = serde_json::to_string(req).map_err(|e| e.to_string())?;
        msg.push('\n');
        self.stdin
            .write_all(msg.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| format!("write to bridge: {e}"))?;
        if let Some(resp) = self.stash.remove(&req.id) {
            return Ok(resp);
        }
        loop {
            let line = self.read_line()?;
            if line.is_empty() {
                continue;
            }
            let resp = BridgeResponse::parse(&line).map_err(|e| format!("malformed response {line:?}: {e}"))?;
            if resp.id == req.id {
                return Ok(resp);
            }
            self.stash.insert(resp.id, resp);
        }
    }
}

/// A detector backend backed by a child process.
pub struct BridgeBackend {
    caps: Capabilities,
    io: Mutex<BridgeIo>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for BridgeBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeBackend").field("caps", &self.caps).finish()
    }
}

impl BridgeBackend {
    /// Start `command[0]` with the remaining items as arguments and read its
    /// handshake.
    pub fn spawn(command: &[String]) -> Result<Self, BridgeError> {
        let (program, args) = command.split_first().ok_or(BridgeError::EmptyCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BridgeError::Spawn {
                program: program.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let mut stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut line = String::new();
        if stdout.read_line(&mut line)? == 0 {
            let _ = child.wait();
            return Err(BridgeError::NoHandshake);
        }
        let handshake: Handshake = match serde_json::from_str(line.trim_end()) {
            Ok(h) => h,
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BridgeError::BadHandshake {
                    line: line.trim_end().to_string(),
                    reason: e.to_string(),
                });
            }
        };
        if handshake.protocol != PROTOCOL_VERSION {
            let _ = child.kill();
            let _ = child.wait();
            return Err(BridgeError::ProtocolMismatch(handshake.protocol));
        }
        Ok(Self {
            caps: Capabilities {
                backend_id: format!("bridge:{program}"),
                max_input_px: handshake.max_input_px,
                classes: handshake.classes,
                single_flight: handshake.single_flight,
            },
            io: Mutex::new(BridgeIo {
                child,
                stdin,
                stdout,
                stash: HashMap::new(),
            }),
            next_id: AtomicU64::new(0),
        })
    }

    /// Send one raw request and wait for its response.
    pub fn request(&self, image: PathBuf, window: [u32; 4]) -> Result<BridgeResponse, BackendError> {
        let req = BridgeRequest {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            image,
            window,
        };
        let mut io = self.io.lock().map_err(|_| BackendError("bridge lock poisoned".into()))?;
        io.round_trip(&req).map_err(BackendError)
    }
}

impl DetectorBackend for BridgeBackend {
    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn detect(&self, request: &WindowRequest<'_>) -> Result<Vec<Detection>, BackendError> {
        let path = request
            .image
            .path
            .clone()
            .ok_or_else(|| BackendError(format!("image `{}` has no file path", request.image.id)))?;
        let w = request.window;
        let resp = self.request(path, [w.x0, w.y0, w.w, w.h])?;
        match (resp.detections, resp.error) {
            (Some(dets), None) => Ok(dets),
            (_, Some(err)) => Err(BackendError(err)),
            (None, None) => unreachable!("validated by BridgeResponse::parse"),
        }
    }
}

impl Drop for BridgeBackend {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
