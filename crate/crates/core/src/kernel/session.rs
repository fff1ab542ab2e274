use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::launcher::{KernelLauncher, SharedProcess};
use super::result::{CellExecutionResult, ExecutionStatus};
use super::transport::{Channel, KernelTransport};
use super::wire::{MessageFactory, WireMessage};
use super::{now_millis, KernelError};
use crate::env::EnvironmentHandle;
use crate::notebook::{output_from_message, KernelSpecInfo, Output};

pub const DEFAULT_INTERRUPT_GRACE: Duration = Duration::from_secs(2);

const POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    /// Budget for launch plus the `kernel_info` round-trip.
    pub startup_timeout: Duration,
    /// Time between interrupting a timed-out cell and killing the kernel.
    pub interrupt_grace: Duration,
    /// Time a kernel gets to exit after `shutdown_request`.
    pub shutdown_grace: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            startup_timeout: Duration::from_secs(60),
            interrupt_grace: DEFAULT_INTERRUPT_GRACE,
            shutdown_grace: Duration::from_secs(2),
        }
    }
}

/// A live connection to one kernel. Execute calls are serialized by `&mut`.
pub struct KernelSession {
    transport: Box<dyn KernelTransport>,
    process: SharedProcess,
    key: Vec<u8>,
    factory: MessageFactory,
    connection_file: Option<PathBuf>,
    config: SessionConfig,
    live: bool,
    closed: bool,
    kernel_info: Value,
}

impl std::fmt::Debug for KernelSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelSession")
            .field("session", &self.factory.session())
            .field("live", &self.live)
            .field("closed", &self.closed)
            .finish()
    }
}

/// Launches a kernel and completes the `kernel_info` handshake.
pub fn start_kernel(
    launcher: &dyn KernelLauncher,
    env: &EnvironmentHandle,
    spec: &KernelSpecInfo,
    cwd: &Path,
    config: SessionConfig,
) -> Result<KernelSession, KernelError> {
    if !env.satisfied {
        return Err(KernelError::LaunchFailed(format!("environment {} is not satisfied", env.env_id)));
    }
    let launched = launcher.launch(env, spec, cwd)?;
    let mut session = KernelSession {
        transport: launched.transport,
        process: launched.process,
        key: launched.key,
        factory: MessageFactory::default(),
        connection_file: launched.connection_file,
        config,
        live: true,
        closed: false,
        kernel_info: Value::Null,
    };
    match session.handshake() {
        Ok(()) => Ok(session),
        Err(e) => {
            session.shutdown();
            Err(e)
        }
    }
}

fn protocol_major(version: &str) -> Option<u32> {
    version.split('.').next()?.trim().parse().ok()
}

impl KernelSession {
    fn process_alive(&self) -> bool {
        self.process.lock().unwrap().is_alive()
    }

    fn send(&mut self, channel: Channel, msg: &WireMessage) -> Result<(), KernelError> {
        let frames = msg.encode(&self.key);
        self.transport.send(channel, frames).map_err(|e| self.mark_dead(e))
    }

    fn mark_dead(&mut self, why: String) -> KernelError {
        self.live = false;
        self.process.lock().unwrap().kill();
        KernelError::SessionDead(why)
    }

    fn decode(&self, frames: &[Vec<u8>]) -> Option<WireMessage> {
        match WireMessage::decode(frames, &self.key) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("discarding kernel message: {e}");
                None
            }
        }
    }

    fn handshake(&mut self) -> Result<(), KernelError> {
        let deadline = Instant::now() + self.config.startup_timeout;
        let mut request = self.factory.message("kernel_info_request", json!({}), None);
        self.send(Channel::Shell, &request)
            .map_err(|e| KernelError::LaunchFailed(e.to_string()))?;
        let mut replied = false;
        let mut iopub_seen = false;
        let mut last_request = Instant::now();
        while !(replied && iopub_seen) {
            let now = Instant::now();
            if now >= deadline {
                return Err(KernelError::HandshakeTimeout);
            }
            if !self.process_alive() {
                let diag = self.process.lock().unwrap().diagnostics();
                return Err(KernelError::LaunchFailed(format!("kernel exited during startup: {}", diag.trim())));
            }
            // Until iopub delivers something the subscription may not be in
            // place yet; asking again produces fresh status messages.
            if replied && now - last_request > Duration::from_millis(500) {
                request = self.factory.message("kernel_info_request", json!({}), None);
                self.send(Channel::Shell, &request)
                    .map_err(|e| KernelError::LaunchFailed(e.to_string()))?;
                last_request = now;
            }
            let frames = match self.transport.recv(POLL.min(deadline - now)) {
                Ok(Some((_, frames))) => frames,
                Ok(None) => continue,
                Err(e) => return Err(KernelError::LaunchFailed(e)),
            };
            let Some(msg) = self.decode(&frames) else { continue };
            match msg.msg_type() {
                "kernel_info_reply" if !replied => {
                    let version = msg.content["protocol_version"].as_str().unwrap_or("").to_string();
                    if protocol_major(&version) != Some(5) {
                        return Err(KernelError::UnsupportedProtocol(version));
                    }
                    self.kernel_info = msg.content;
                    replied = true;
                }
                "status" => iopub_seen = true,
                _ => {}
            }
        }
        let budget = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(500));
        if !self.transport.ping(budget.min(Duration::from_secs(5))) {
            return Err(KernelError::LaunchFailed("kernel did not answer on the heartbeat channel".into()));
        }
        Ok(())
    }

    /// Content of the kernel's `kernel_info_reply`.
    pub fn kernel_info(&self) -> &Value {
        &self.kernel_info
    }

    /// `language_info.version` as reported by the kernel.
    pub fn language_version(&self) -> Option<&str> {
        self.kernel_info["language_info"]["version"].as_str()
    }

    pub fn is_live(&self) -> bool {
        self.live && !self.closed && self.process_alive()
    }

    /// Runs `code` and collects the outputs attributed to this request until
    /// the kernel is idle again and has sent its `execute_reply`.
    pub fn execute(&mut self, code: &str, timeout: Duration) -> Result<CellExecutionResult, KernelError> {
        if self.closed || !self.live {
            return Err(KernelError::SessionDead("session is not live".into()));
        }
        let started_at = now_millis();
        let deadline = Instant::now() + timeout;
        let request = self.factory.message(
            "execute_request",
            json!({
                "code": code,
                "silent": false,
                "store_history": true,
                "user_expressions": {},
                "allow_stdin": true,
                "stop_on_error": true,
            }),
            None,
        );
        self.send(Channel::Shell, &request)?;

        let mut outputs: Vec<Output> = Vec::new();
        let mut reply: Option<Value> = None;
        let mut idle = false;
        let mut input_count: Option<u32> = None;
        let mut stdin_requests = 0u32;
        while !(idle && reply.is_some()) {
            let now = Instant::now();
            if now >= deadline {
                return Ok(self.time_out(outputs, input_count, started_at, stdin_requests));
            }
            let frames = match self.transport.recv(POLL.min(deadline - now)) {
                Ok(Some((_, frames))) => frames,
                Ok(None) => {
                    if !self.process_alive() {
                        return Err(self.mark_dead("kernel process exited".into()));
                    }
                    continue;
                }
                Err(e) => return Err(self.mark_dead(e)),
            };
            let Some(msg) = self.decode(&frames) else { continue };
            if msg.parent_msg_id() != Some(request.msg_id()) {
                log::debug!("ignoring {} for another request", msg.msg_type());
                continue;
            }
            match msg.msg_type() {
                "status" => idle |= msg.content["execution_state"] == "idle",
                kind @ ("stream" | "execute_result" | "display_data" | "error") => {
                    match output_from_message(kind, &msg.content) {
                        Ok(out) => outputs.push(out),
                        Err(e) => log::warn!("malformed {kind} message: {e}"),
                    }
                }
                "clear_output" => outputs.clear(),
                "execute_input" => {
                    input_count = msg.content["execution_count"].as_u64().map(|c| c as u32);
                }
                "execute_reply" => reply = Some(msg.content),
                "input_request" => {
                    stdin_requests += 1;
                    let answer = self.factory.message("input_reply", json!({"value": ""}), Some(&msg));
                    self.send(Channel::Stdin, &answer)?;
                }
                _ => {}
            }
        }

        let reply = reply.unwrap_or_default();
        let status = match reply["status"].as_str() {
            Some("ok") => ExecutionStatus::Ok,
            Some("aborted") => ExecutionStatus::Aborted,
            _ => ExecutionStatus::Error,
        };
        let execution_count = reply["execution_count"]
            .as_u64()
            .map(|c| c as u32)
            .or(input_count);
        if status == ExecutionStatus::Error {
            finish_with_error(&mut outputs, &reply);
        }
        let mut result = CellExecutionResult::new(status, outputs, execution_count, started_at, now_millis());
        result.stdin_requests = stdin_requests;
        Ok(result)
    }

    fn time_out(
        &mut self,
        outputs: Vec<Output>,
        execution_count: Option<u32>,
        started_at: chrono::DateTime<chrono::Utc>,
        stdin_requests: u32,
    ) -> CellExecutionResult {
        let ended_at = now_millis();
        self.process.lock().unwrap().interrupt();
        // Give the interrupt a chance to land; a reply ends the wait early.
        let grace_end = Instant::now() + self.config.interrupt_grace;
        while let Some(left) = grace_end.checked_duration_since(Instant::now()) {
            match self.transport.recv(POLL.min(left)) {
                Ok(Some((_, frames))) => {
                    if self.decode(&frames).is_some_and(|m| m.msg_type() == "execute_reply") {
                        break;
                    }
                }
                Ok(None) => {}
                Err(_) => break,
            }
        }
        self.live = false;
        self.process.lock().unwrap().kill();
        self.close();
        let mut result = CellExecutionResult::new(ExecutionStatus::Timeout, outputs, execution_count, started_at, ended_at);
        result.stdin_requests = stdin_requests;
        result
    }

    fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        self.live = false;
        self.transport.close();
        if let Some(file) = self.connection_file.take() {
            let _ = std::fs::remove_file(file);
        }
    }

    /// Asks the kernel to exit, killing it after the grace period. Safe to
    /// call any number of times.
    pub fn shutdown(&mut self) {
        if self.closed {
            return;
        }
        if self.live && self.process_alive() {
            let request = self.factory.message("shutdown_request", json!({"restart": false}), None);
            if self.send(Channel::Control, &request).is_ok() {
                let mut process = self.process.lock().unwrap();
                if !process.wait_exit(self.config.shutdown_grace) {
                    process.kill();
                }
            }
        }
        self.process.lock().unwrap().kill();
        self.close();
    }
}

impl Drop for KernelSession {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Leaves exactly one error output, at the end. Uses the reply's ename and
/// evalue when the kernel published no error on iopub.
fn finish_with_error(outputs: &mut Vec<Output>, reply: &Value) {
    let last = outputs.iter().rposition(|o| matches!(o, Output::Error { .. }));
    let error = match last {
        Some(i) => outputs.remove(i),
        None => Output::Error {
            ename: reply["ename"].as_str().filter(|s| !s.is_empty()).unwrap_or("UnknownError").to_string(),
            evalue: reply["evalue"].as_str().unwrap_or("").to_string(),
            traceback: reply["traceback"]
                .as_array()
                .map(|t| t.iter().filter_map(|l| l.as_str().map(str::to_string)).collect())
                .unwrap_or_default(),
        },
    };
    outputs.retain(|o| !matches!(o, Output::Error { .. }));
    outputs.push(error);
}
