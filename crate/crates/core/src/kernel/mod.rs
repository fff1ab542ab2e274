//! Kernel messaging protocol client.
//!
//! A [`KernelLauncher`] starts a kernel for a provisioned environment and
//! hands back a transport plus a process handle; [`start_kernel`] performs
//! the `kernel_info` handshake and yields a [`KernelSession`] that executes
//! code one request at a time.

mod connection;
mod launcher;
mod minipython;
mod mock;
mod result;
mod session;
mod transport;
mod wire;
mod zmq;

pub use connection::{ConnectionInfo, SIGNATURE_SCHEME};
pub use launcher::{IpykernelLauncher, KernelLauncher, LaunchedKernel, ProcessRegistry, SharedProcess};
pub use minipython::MiniPython;
pub use mock::{MockEnv, MockEvent, MockKernelConfig, MockLauncher, MockRunner, RunnerFactory, ScriptedRunner, StrayKind};
pub use result::{CellExecutionResult, ExecutionStatus};
pub use session::{start_kernel, KernelSession, SessionConfig, DEFAULT_INTERRUPT_GRACE};
pub use transport::{mock_pair, Channel, Frames, KernelProcess, KernelTransport, MockKernelEnd, MockTransport};
pub use wire::{sign_message, verify_signature, MessageFactory, WireError, WireMessage, DELIMITER, PROTOCOL_VERSION};
pub use zmq::ZmqTransport;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum KernelError {
    #[error("kernel launch failed: {0}")]
    LaunchFailed(String),
    #[error("no kernel_info reply within the startup timeout")]
    HandshakeTimeout,
    #[error("kernel speaks protocol {0}, need 5.x")]
    UnsupportedProtocol(String),
    #[error("kernel session is dead: {0}")]
    SessionDead(String),
}

pub(crate) fn now_millis() -> chrono::DateTime<chrono::Utc> {
    use chrono::{SubsecRound, Utc};
    Utc::now().trunc_subsecs(3)
}
