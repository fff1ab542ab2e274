//! In-process kernel test double. It speaks signed protocol messages over a
//! [`MockTransport`](super::MockTransport) and gets its behavior from a
//! [`MockRunner`].

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::RecvTimeoutError;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::launcher::{KernelLauncher, LaunchedKernel, ProcessRegistry, SharedProcess};
use super::minipython::MiniPython;
use super::transport::{mock_pair, Channel, KernelProcess, MockKernelEnd};
use super::wire::{MessageFactory, WireMessage, PROTOCOL_VERSION};
use super::KernelError;
use crate::env::{installed_packages, EnvironmentHandle, INTERPRETER_VERSION_FILE};
use crate::notebook::{KernelSpecInfo, StreamName};

/// Messages published with a parent that is not the running request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrayKind {
    Stream(String),
    Error(String),
    Idle,
    Reply,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockEvent {
    Stream { name: StreamName, text: String },
    /// `execute_result` with a `text/plain` payload.
    Result(String),
    Display(Value),
    /// Publishes an error and ends the cell with status error.
    Error { ename: String, evalue: String },
    /// A message whose parent is a made-up request.
    Foreign(StrayKind),
    /// A message whose parent is the previous execute request.
    Stale(StrayKind),
    /// Asks for input on the stdin channel and waits for the reply.
    Input(String),
    /// Busy for a while; an interrupt cuts it short.
    Sleep(Duration),
    /// Busy until interrupted or killed.
    Hang,
    /// Busy until killed; interrupts are ignored.
    Wedged,
}

impl MockEvent {
    pub fn stdout(text: impl Into<String>) -> Self {
        MockEvent::Stream {
            name: StreamName::Stdout,
            text: text.into(),
        }
    }

    pub fn error(ename: impl Into<String>, evalue: impl Into<String>) -> Self {
        MockEvent::Error {
            ename: ename.into(),
            evalue: evalue.into(),
        }
    }
}

/// Decides what a cell's code does.
pub trait MockRunner: Send {
    fn run(&mut self, code: &str) -> Vec<MockEvent>;
}

/// What a runner may know about the environment it pretends to run in.
#[derive(Debug, Clone)]
pub struct MockEnv {
    pub language_version: String,
    pub installed: BTreeSet<String>,
    pub cwd: PathBuf,
}

pub type RunnerFactory = Arc<dyn Fn(&MockEnv) -> Box<dyn MockRunner> + Send + Sync>;

/// Fixed responses keyed by exact cell source. Unknown code succeeds
/// silently.
#[derive(Debug, Clone, Default)]
pub struct ScriptedRunner {
    scripts: HashMap<String, Vec<MockEvent>>,
}

impl ScriptedRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(mut self, code: impl Into<String>, events: Vec<MockEvent>) -> Self {
        self.scripts.insert(code.into(), events);
        self
    }
}

impl MockRunner for ScriptedRunner {
    fn run(&mut self, code: &str) -> Vec<MockEvent> {
        self.scripts.get(code).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockKernelConfig {
    pub protocol_version: String,
    /// When false the kernel ignores `kernel_info_request`.
    pub answer_kernel_info: bool,
    pub heartbeat: bool,
    /// Ignores `shutdown_request`, so only a kill stops it.
    pub ignore_shutdown: bool,
}

impl Default for MockKernelConfig {
    fn default() -> Self {
        MockKernelConfig {
            protocol_version: PROTOCOL_VERSION.into(),
            answer_kernel_info: true,
            heartbeat: true,
            ignore_shutdown: false,
        }
    }
}

#[derive(Default)]
struct Flags {
    alive: AtomicBool,
    interrupted: AtomicBool,
    killed: AtomicBool,
}

struct MockProcess {
    flags: Arc<Flags>,
}

impl KernelProcess for MockProcess {
    fn interrupt(&mut self) {
        self.flags.interrupted.store(true, Ordering::SeqCst);
    }

    fn kill(&mut self) {
        self.flags.killed.store(true, Ordering::SeqCst);
        self.flags.alive.store(false, Ordering::SeqCst);
    }

    fn is_alive(&mut self) -> bool {
        self.flags.alive.load(Ordering::SeqCst)
    }

    fn wait_exit(&mut self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.is_alive() {
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        true
    }
}

/// Starts mock kernels on background threads.
#[derive(Clone)]
pub struct MockLauncher {
    factory: RunnerFactory,
    config: MockKernelConfig,
    registry: ProcessRegistry,
}

impl std::fmt::Debug for MockLauncher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockLauncher").field("config", &self.config).finish()
    }
}

impl MockLauncher {
    pub fn new(factory: RunnerFactory) -> Self {
        MockLauncher {
            factory,
            config: MockKernelConfig::default(),
            registry: ProcessRegistry::default(),
        }
    }

    /// Kernels that interpret a small subset of Python.
    pub fn mini_python() -> Self {
        Self::new(Arc::new(|env: &MockEnv| Box::new(MiniPython::new(env)) as Box<dyn MockRunner>))
    }

    pub fn scripted(runner: ScriptedRunner) -> Self {
        Self::new(Arc::new(move |_: &MockEnv| Box::new(runner.clone()) as Box<dyn MockRunner>))
    }

    pub fn with_config(mut self, config: MockKernelConfig) -> Self {
        self.config = config;
        self
    }
}

fn mock_env(env: &EnvironmentHandle, cwd: &Path) -> MockEnv {
    let language_version = std::fs::read_to_string(env.env_dir.join(INTERPRETER_VERSION_FILE))
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|_| env.actual_interpreter_version.to_string());
    MockEnv {
        language_version,
        installed: installed_packages(&env.env_dir),
        cwd: cwd.to_path_buf(),
    }
}

impl KernelLauncher for MockLauncher {
    fn launch(&self, env: &EnvironmentHandle, _spec: &KernelSpecInfo, cwd: &Path) -> Result<LaunchedKernel, KernelError> {
        if !env.interpreter_path.is_file() {
            return Err(KernelError::LaunchFailed(format!(
                "interpreter {} does not exist",
                env.interpreter_path.display()
            )));
        }
        let menv = mock_env(env, cwd);
        let runner = (self.factory)(&menv);
        let key = uuid::Uuid::new_v4().to_string().into_bytes();
        let (client, end) = mock_pair();
        let flags = Arc::new(Flags::default());
        flags.alive.store(true, Ordering::SeqCst);
        end.heart.store(self.config.heartbeat, Ordering::SeqCst);
        let kernel = MockKernel {
            end,
            key: key.clone(),
            factory: MessageFactory::new("mock-kernel"),
            flags: flags.clone(),
            config: self.config.clone(),
            runner,
            language_version: menv.language_version,
            count: 0,
            pending: VecDeque::new(),
            previous: None,
        };
        std::thread::Builder::new()
            .name("mock-kernel".into())
            .spawn(move || kernel.serve())
            .map_err(|e| KernelError::LaunchFailed(format!("spawning mock kernel: {e}")))?;
        let process: SharedProcess = Arc::new(Mutex::new(Box::new(MockProcess { flags })));
        self.registry.register(process.clone());
        Ok(LaunchedKernel {
            transport: Box::new(client),
            process,
            key,
            connection_file: None,
        })
    }

    fn registry(&self) -> &ProcessRegistry {
        &self.registry
    }
}

struct MockKernel {
    end: MockKernelEnd,
    key: Vec<u8>,
    factory: MessageFactory,
    flags: Arc<Flags>,
    config: MockKernelConfig,
    runner: Box<dyn MockRunner>,
    language_version: String,
    count: u32,
    pending: VecDeque<(Channel, WireMessage)>,
    previous: Option<WireMessage>,
}

enum Outcome {
    Ok,
    Error { ename: String, evalue: String, traceback: Vec<String> },
    Killed,
}

fn traceback(ename: &str, evalue: &str) -> Vec<String> {
    vec![
        "---------------------------------------------------------------------------".into(),
        format!("{ename}                                 Traceback (most recent call last)"),
        "Cell In[1], line 1".into(),
        format!("{ename}: {evalue}"),
    ]
}

impl MockKernel {
    fn killed(&self) -> bool {
        self.flags.killed.load(Ordering::SeqCst)
    }

    fn emit(&self, channel: Channel, msg: &WireMessage) {
        let _ = self.end.to_client.send((channel, msg.encode(&self.key)));
    }

    fn publish(&self, msg_type: &str, content: Value, parent: &WireMessage) {
        let msg = self.factory.message(msg_type, content, Some(parent));
        self.emit(Channel::IoPub, &msg);
    }

    fn next(&mut self) -> Option<(Channel, WireMessage)> {
        if let Some(m) = self.pending.pop_front() {
            return Some(m);
        }
        loop {
            if self.killed() {
                return None;
            }
            match self.end.from_client.recv_timeout(Duration::from_millis(5)) {
                Ok((channel, frames)) => match WireMessage::decode(&frames, &self.key) {
                    Ok(msg) => return Some((channel, msg)),
                    Err(e) => log::warn!("mock kernel dropped a message: {e}"),
                },
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return None,
            }
        }
    }

    fn serve(mut self) {
        while let Some((channel, msg)) = self.next() {
            match (channel, msg.msg_type()) {
                (Channel::Shell, "kernel_info_request") => {
                    if self.config.answer_kernel_info {
                        self.kernel_info(&msg);
                    }
                }
                (Channel::Shell, "execute_request") => {
                    if !self.execute(&msg) {
                        break;
                    }
                }
                (Channel::Control, "interrupt_request") => {
                    self.flags.interrupted.store(true, Ordering::SeqCst);
                    let reply = self.factory.message("interrupt_reply", json!({"status": "ok"}), Some(&msg));
                    self.emit(Channel::Control, &reply);
                }
                (Channel::Control, "shutdown_request") if !self.config.ignore_shutdown => {
                    let reply = self.factory.message("shutdown_reply", json!({"status": "ok", "restart": false}), Some(&msg));
                    self.emit(Channel::Control, &reply);
                    break;
                }
                _ => {}
            }
        }
        self.end.heart.store(false, Ordering::SeqCst);
        self.flags.alive.store(false, Ordering::SeqCst);
    }

    fn kernel_info(&self, req: &WireMessage) {
        self.publish("status", json!({"execution_state": "busy"}), req);
        let reply = self.factory.message(
            "kernel_info_reply",
            json!({
                "status": "ok",
                "protocol_version": self.config.protocol_version,
                "implementation": "repro-lens-mock",
                "implementation_version": env!("CARGO_PKG_VERSION"),
                "language_info": {
                    "name": "python",
                    "version": self.language_version,
                    "mimetype": "text/x-python",
                    "file_extension": ".py",
                },
                "banner": "mock kernel",
            }),
            Some(req),
        );
        self.emit(Channel::Shell, &reply);
        self.publish("status", json!({"execution_state": "idle"}), req);
    }

    /// Waits while busy. Returns false when cut short by an interrupt or kill.
    fn busy(&self, duration: Option<Duration>) -> bool {
        let start = Instant::now();
        loop {
            if self.killed() || self.flags.interrupted.load(Ordering::SeqCst) {
                return false;
            }
            if duration.is_some_and(|d| start.elapsed() >= d) {
                return true;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    fn stray(&self, kind: &StrayKind, parent: &WireMessage) {
        let (channel, msg_type, content) = match kind {
            StrayKind::Stream(text) => (Channel::IoPub, "stream", json!({"name": "stdout", "text": text})),
            StrayKind::Error(ename) => (
                Channel::IoPub,
                "error",
                json!({"ename": ename, "evalue": "stray", "traceback": []}),
            ),
            StrayKind::Idle => (Channel::IoPub, "status", json!({"execution_state": "idle"})),
            StrayKind::Reply => (
                Channel::Shell,
                "execute_reply",
                json!({"status": "error", "ename": "Stray", "evalue": "", "traceback": [], "execution_count": 0}),
            ),
        };
        let msg = self.factory.message(msg_type, content, Some(parent));
        self.emit(channel, &msg);
    }

    fn wait_input(&mut self) -> Option<String> {
        loop {
            if self.killed() {
                return None;
            }
            match self.end.from_client.recv_timeout(Duration::from_millis(5)) {
                Ok((channel, frames)) => {
                    let Ok(msg) = WireMessage::decode(&frames, &self.key) else { continue };
                    if channel == Channel::Stdin && msg.msg_type() == "input_reply" {
                        return Some(msg.content["value"].as_str().unwrap_or("").to_string());
                    }
                    self.pending.push_back((channel, msg));
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return None,
            }
        }
    }

    /// Returns false when the kernel should stop serving.
    fn execute(&mut self, req: &WireMessage) -> bool {
        self.flags.interrupted.store(false, Ordering::SeqCst);
        let code = req.content["code"].as_str().unwrap_or("").to_string();
        let allow_stdin = req.content["allow_stdin"].as_bool().unwrap_or(true);
        self.count += 1;
        self.publish("status", json!({"execution_state": "busy"}), req);
        self.publish("execute_input", json!({"code": code, "execution_count": self.count}), req);

        let mut outcome = Outcome::Ok;
        for event in self.runner.run(&code) {
            if self.killed() {
                outcome = Outcome::Killed;
                break;
            }
            match event {
                MockEvent::Stream { name, text } => {
                    self.publish("stream", json!({"name": name.as_str(), "text": text}), req);
                }
                MockEvent::Result(text) => self.publish(
                    "execute_result",
                    json!({"data": {"text/plain": text}, "metadata": {}, "execution_count": self.count}),
                    req,
                ),
                MockEvent::Display(data) => {
                    self.publish("display_data", json!({"data": data, "metadata": {}, "transient": {}}), req)
                }
                MockEvent::Error { ename, evalue } => {
                    outcome = Outcome::Error {
                        traceback: traceback(&ename, &evalue),
                        ename,
                        evalue,
                    };
                    break;
                }
                MockEvent::Foreign(kind) => {
                    let fake = self.factory.message("execute_request", json!({}), None);
                    self.stray(&kind, &fake);
                }
                MockEvent::Stale(kind) => {
                    if let Some(prev) = self.previous.clone() {
                        self.stray(&kind, &prev);
                    }
                }
                MockEvent::Input(prompt) => {
                    if !allow_stdin {
                        outcome = Outcome::Error {
                            ename: "StdinNotImplementedError".into(),
                            evalue: "raw_input was called, but this frontend does not support input requests.".into(),
                            traceback: Vec::new(),
                        };
                        break;
                    }
                    let ask = self
                        .factory
                        .message("input_request", json!({"prompt": prompt, "password": false}), Some(req));
                    self.emit(Channel::Stdin, &ask);
                    if self.wait_input().is_none() {
                        outcome = Outcome::Killed;
                        break;
                    }
                }
                MockEvent::Sleep(d) => {
                    if !self.busy(Some(d)) {
                        outcome = self.interrupted();
                        break;
                    }
                }
                MockEvent::Wedged => {
                    while !self.killed() {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    outcome = Outcome::Killed;
                    break;
                }
                MockEvent::Hang => {
                    self.busy(None);
                    outcome = self.interrupted();
                    break;
                }
            }
        }

        let content = match &outcome {
            Outcome::Killed => return false,
            Outcome::Ok => json!({"status": "ok", "execution_count": self.count, "user_expressions": {}}),
            Outcome::Error { ename, evalue, traceback } => {
                self.publish(
                    "error",
                    json!({"ename": ename, "evalue": evalue, "traceback": traceback}),
                    req,
                );
                json!({
                    "status": "error",
                    "execution_count": self.count,
                    "ename": ename,
                    "evalue": evalue,
                    "traceback": traceback,
                })
            }
        };
        let reply = self.factory.message("execute_reply", content, Some(req));
        self.emit(Channel::Shell, &reply);
        self.publish("status", json!({"execution_state": "idle"}), req);
        self.previous = Some(req.clone());
        true
    }

    fn interrupted(&self) -> Outcome {
        if self.killed() {
            Outcome::Killed
        } else {
            Outcome::Error {
                ename: "KeyboardInterrupt".into(),
                evalue: String::new(),
                traceback: traceback("KeyboardInterrupt", ""),
            }
        }
    }
}
