use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Shell,
    IoPub,
    Stdin,
    Control,
    Heartbeat,
}

pub type Frames = Vec<Vec<u8>>;

/// Moves raw multipart frames between the client and one kernel. Signing
/// and parsing happen above this layer.
pub trait KernelTransport: Send {
    fn send(&mut self, channel: Channel, frames: Frames) -> Result<(), String>;

    /// The next message from the shell, iopub, stdin or control channel,
    /// waiting at most `timeout`.
    fn recv(&mut self, timeout: Duration) -> Result<Option<(Channel, Frames)>, String>;

    /// One heartbeat round-trip.
    fn ping(&mut self, timeout: Duration) -> bool;

    fn close(&mut self);
}

/// The kernel as an OS-level (or simulated) process.
pub trait KernelProcess: Send {
    fn interrupt(&mut self);
    fn kill(&mut self);
    fn is_alive(&mut self) -> bool;
    /// Waits up to `timeout` for the process to exit; true once it has.
    fn wait_exit(&mut self, timeout: Duration) -> bool;
    /// Captured diagnostics such as stderr.
    fn diagnostics(&mut self) -> String {
        String::new()
    }
}

/// Client side of an in-process channel pair.
pub struct MockTransport {
    to_kernel: Sender<(Channel, Frames)>,
    from_kernel: Receiver<(Channel, Frames)>,
    heart: Arc<AtomicBool>,
    closed: bool,
}

/// Kernel side of an in-process channel pair.
pub struct MockKernelEnd {
    pub from_client: Receiver<(Channel, Frames)>,
    pub to_client: Sender<(Channel, Frames)>,
    /// Heartbeat replies succeed while this is set.
    pub heart: Arc<AtomicBool>,
}

pub fn mock_pair() -> (MockTransport, MockKernelEnd) {
    let (to_kernel, from_client) = mpsc::channel();
    let (to_client, from_kernel) = mpsc::channel();
    let heart = Arc::new(AtomicBool::new(false));
    (
        MockTransport {
            to_kernel,
            from_kernel,
            heart: heart.clone(),
            closed: false,
        },
        MockKernelEnd {
            from_client,
            to_client,
            heart,
        },
    )
}

impl KernelTransport for MockTransport {
    fn send(&mut self, channel: Channel, frames: Frames) -> Result<(), String> {
        if self.closed {
            return Err("transport closed".into());
        }
        self.to_kernel
            .send((channel, frames))
            .map_err(|_| "kernel end disconnected".to_string())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(Channel, Frames)>, String> {
        if self.closed {
            return Err("transport closed".into());
        }
        match self.from_kernel.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err("kernel end disconnected".into()),
        }
    }

    fn ping(&mut self, _timeout: Duration) -> bool {
        !self.closed && self.heart.load(Ordering::SeqCst)
    }

    fn close(&mut self) {
        self.closed = true;
    }
}
