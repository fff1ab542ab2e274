//! ZeroMQ transport for real kernels. Sockets live on a dedicated thread
//! running a single-threaded tokio runtime; the blocking API talks to it
//! through channels.

use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use bytes::Bytes;
use tokio::sync::mpsc as async_mpsc;
use zeromq::util::PeerIdentity;
use zeromq::{DealerSocket, ReqSocket, Socket, SocketOptions, SocketRecv, SocketSend, SubSocket, ZmqMessage};

use super::connection::ConnectionInfo;
use super::transport::{Channel, Frames, KernelTransport};

enum Command {
    Send(Channel, Frames),
    Ping(Duration, mpsc::Sender<bool>),
}

pub struct ZmqTransport {
    commands: Option<async_mpsc::UnboundedSender<Command>>,
    inbound: mpsc::Receiver<(Channel, Frames)>,
    thread: Option<JoinHandle<()>>,
}

fn to_message(frames: Frames) -> Option<ZmqMessage> {
    ZmqMessage::try_from(frames.into_iter().map(Bytes::from).collect::<Vec<_>>()).ok()
}

fn from_message(msg: ZmqMessage) -> Frames {
    msg.into_vec().into_iter().map(|b| b.to_vec()).collect()
}

fn dealer(identity: &[u8]) -> DealerSocket {
    let mut opts = SocketOptions::default();
    opts.peer_identity(PeerIdentity::try_from(identity.to_vec()).expect("short identity"));
    DealerSocket::with_options(opts)
}

/// Blocks until every port accepts TCP connections, so that the ZeroMQ
/// connects below do not fall into their slow retry backoff.
async fn wait_for_ports(info: &ConnectionInfo) {
    let Ok(ip) = info.ip.parse::<std::net::IpAddr>() else {
        return;
    };
    for port in info.ports() {
        let addr = SocketAddr::new(ip, port);
        loop {
            let ok = tokio::task::spawn_blocking(move || TcpStream::connect_timeout(&addr, Duration::from_millis(200)).is_ok())
                .await
                .unwrap_or(false);
            if ok {
                break;
            }
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
    }
}

fn forward<S: SocketRecv + Send + 'static>(mut socket: S, channel: Channel, out: mpsc::Sender<(Channel, Frames)>) {
    tokio::spawn(async move {
        while let Ok(msg) = socket.recv().await {
            if out.send((channel, from_message(msg))).is_err() {
                break;
            }
        }
    });
}

async fn run(info: ConnectionInfo, mut commands: async_mpsc::UnboundedReceiver<Command>, inbound: mpsc::Sender<(Channel, Frames)>) {
    wait_for_ports(&info).await;
    let identity = uuid::Uuid::new_v4().as_bytes().to_vec();
    // The kernel routes stdin requests by the shell identity, so both
    // sockets share it.
    let mut shell = dealer(&identity);
    let mut stdin = dealer(&identity);
    let mut control = DealerSocket::new();
    let mut iopub = SubSocket::new();
    let connected = async {
        iopub.connect(&info.endpoint(info.iopub_port)).await?;
        iopub.subscribe("").await?;
        shell.connect(&info.endpoint(info.shell_port)).await?;
        stdin.connect(&info.endpoint(info.stdin_port)).await?;
        control.connect(&info.endpoint(info.control_port)).await?;
        Ok::<_, zeromq::ZmqError>(())
    }
    .await;
    if let Err(e) = connected {
        log::warn!("kernel transport connect failed: {e}");
        return;
    }

    let (mut shell_tx, shell_rx) = shell.split();
    let (mut stdin_tx, stdin_rx) = stdin.split();
    let (mut control_tx, control_rx) = control.split();
    forward(shell_rx, Channel::Shell, inbound.clone());
    forward(stdin_rx, Channel::Stdin, inbound.clone());
    forward(control_rx, Channel::Control, inbound.clone());
    forward(iopub, Channel::IoPub, inbound);

    let mut hb: Option<ReqSocket> = None;
    while let Some(cmd) = commands.recv().await {
        match cmd {
            Command::Send(channel, frames) => {
                let Some(msg) = to_message(frames) else { continue };
                let sent = match channel {
                    Channel::Shell => shell_tx.send(msg).await,
                    Channel::Stdin => stdin_tx.send(msg).await,
                    Channel::Control => control_tx.send(msg).await,
                    Channel::IoPub | Channel::Heartbeat => Ok(()),
                };
                if let Err(e) = sent {
                    log::warn!("send on {channel:?} failed: {e}");
                }
            }
            Command::Ping(timeout, reply) => {
                let ok = tokio::time::timeout(timeout, async {
                    if hb.is_none() {
                        let mut s = ReqSocket::new();
                        s.connect(&info.endpoint(info.hb_port)).await.ok()?;
                        hb = Some(s);
                    }
                    let s = hb.as_mut()?;
                    s.send(ZmqMessage::from("ping")).await.ok()?;
                    s.recv().await.ok()
                })
                .await
                .ok()
                .flatten()
                .is_some();
                if !ok {
                    // A REQ socket that missed its reply cannot send again.
                    hb = None;
                }
                let _ = reply.send(ok);
            }
        }
    }
}

impl ZmqTransport {
    /// Starts connecting in the background; messages sent before the kernel
    /// is reachable are queued.
    pub fn connect(info: &ConnectionInfo) -> Result<Self, String> {
        let (cmd_tx, cmd_rx) = async_mpsc::unbounded_channel();
        let (in_tx, in_rx) = mpsc::channel();
        let info = info.clone();
        let thread = std::thread::Builder::new()
            .name("kernel-zmq".into())
            .spawn(move || {
                let rt = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
                    Ok(rt) => rt,
                    Err(e) => {
                        log::error!("kernel transport runtime: {e}");
                        return;
                    }
                };
                rt.block_on(run(info, cmd_rx, in_tx));
            })
            .map_err(|e| format!("spawning transport thread: {e}"))?;
        Ok(ZmqTransport {
            commands: Some(cmd_tx),
            inbound: in_rx,
            thread: Some(thread),
        })
    }
}

impl KernelTransport for ZmqTransport {
    fn send(&mut self, channel: Channel, frames: Frames) -> Result<(), String> {
        self.commands
            .as_ref()
            .ok_or("transport closed")?
            .send(Command::Send(channel, frames))
            .map_err(|_| "transport thread stopped".to_string())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<(Channel, Frames)>, String> {
        if self.commands.is_none() {
            return Err("transport closed".into());
        }
        match self.inbound.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err("transport thread stopped".into()),
        }
    }

    fn ping(&mut self, timeout: Duration) -> bool {
        let Some(commands) = &self.commands else {
            return false;
        };
        let (tx, rx) = mpsc::channel();
        let start = Instant::now();
        if commands.send(Command::Ping(timeout, tx)).is_err() {
            return false;
        }
        rx.recv_timeout(timeout + Duration::from_millis(500) - start.elapsed().min(timeout))
            .unwrap_or(false)
    }

    fn close(&mut self) {
        // Dropping the sender ends the command loop and with it the runtime.
        self.commands = None;
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ZmqTransport {
    fn drop(&mut self) {
        self.close();
    }
}
