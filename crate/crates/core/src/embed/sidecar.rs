//! Client for a model-runner child process speaking the line protocol.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use tracing::warn;

use crate::error::EmbedError;

use super::wire::{ProviderRequest, ProviderResponse};
use super::{check_image, check_text, check_vector, EmbeddingProvider, DEFAULT_REQUEST_TIMEOUT};

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    /// Set once the connection can no longer be trusted to stay in step.
    broken: Option<String>,
}

impl Connection {
    fn round_trip(&mut self, request: &ProviderRequest, timeout: Duration) -> Result<ProviderResponse, EmbedError> {
        if let Some(reason) = &self.broken {
            return Err(EmbedError::Unavailable(reason.clone()));
        }
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        if let Err(e) = self.stdin.write_all(line.as_bytes()).and_then(|()| self.stdin.flush()) {
            return Err(self.fail(format!("writing to sidecar: {e}")));
        }
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => serde_json::from_str(&reply).map_err(|e| EmbedError::Protocol {
                message: e.to_string(),
                line: reply,
            }),
            Ok(Err(e)) => Err(self.fail(format!("reading from sidecar: {e}"))),
            Err(RecvTimeoutError::Disconnected) => Err(self.fail("sidecar exited".to_owned())),
            Err(RecvTimeoutError::Timeout) => {
                // A late reply would desynchronize every later request.
                self.fail(format!("timed out after {timeout:?}"));
                Err(EmbedError::Timeout(timeout))
            }
        }
    }

    fn fail(&mut self, reason: String) -> EmbedError {
        let _ = self.child.kill();
        self.broken = Some(reason.clone());
        EmbedError::Unavailable(reason)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Requests are serialized over one stdio connection; concurrent callers block.
pub struct SidecarProvider {
    dim: usize,
    model_id: String,
    request_timeout: Duration,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for SidecarProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarProvider")
            .field("dim", &self.dim)
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

impl SidecarProvider {
    /// Launch `argv`, run the `info` handshake, and check the dimension.
    pub fn spawn(argv: &[String], expected_dim: usize, handshake_timeout: Duration) -> Result<Self, EmbedError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| EmbedError::Unavailable("empty sidecar command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EmbedError::Unavailable(format!("launching {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("sidecar-reader".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let stop = line.is_err();
                    if tx.send(line).is_err() || stop {
                        break;
                    }
                }
            })
            .map_err(|e| EmbedError::Unavailable(format!("spawning reader thread: {e}")))?;
        let mut conn = Connection {
            child,
            stdin,
            lines: rx,
            broken: None,
        };
        let info = conn.round_trip(&ProviderRequest::info(), handshake_timeout)?;
        if !info.ok {
            return Err(EmbedError::Unavailable(
                info.error.unwrap_or_else(|| "sidecar refused info request".into()),
            ));
        }
        let dim = info.dim.ok_or_else(|| EmbedError::Protocol {
            message: "info response lacks `dim`".into(),
            line: serde_json::to_string(&info).unwrap_or_default(),
        })?;
        if dim != expected_dim {
            return Err(EmbedError::DimensionMismatch {
                provider: dim,
                expected: expected_dim,
            });
        }
        Ok(Self {
            dim,
            model_id: info.model_id.unwrap_or_else(|| "unknown".into()),
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            conn: Mutex::new(conn),
        })
    }

    pub fn with_request_timeout(mut self, timeout: Duration) -> Self {
        self.request_timeout = timeout;
        self
    }

    fn request(&self, request: &ProviderRequest) -> Result<Vec<f32>, EmbedError> {
        let response = {
            let mut conn = self
                .conn
                .lock()
                .map_err(|_| EmbedError::Unavailable("sidecar connection poisoned".into()))?;
            conn.round_trip(request, self.request_timeout)?
        };
        vector_from(response, self.dim)
    }
}

pub(super) fn vector_from(response: ProviderResponse, dim: usize) -> Result<Vec<f32>, EmbedError> {
    if !response.ok {
        let message = response.error.unwrap_or_else(|| "unspecified provider error".into());
        warn!(%message, "provider rejected request");
        return Err(EmbedError::Rejected(message));
    }
    let vector = response.vector.ok_or_else(|| EmbedError::Protocol {
        message: "response lacks `vector`".into(),
        line: String::new(),
    })?;
    check_vector(&vector, dim)?;
    Ok(vector)
}

impl EmbeddingProvider for SidecarProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        check_text(text)?;
        self.request(&ProviderRequest::embed_text(text))
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
        check_image(image_bytes)?;
        self.request(&ProviderRequest::embed_image(image_bytes))
    }
}
