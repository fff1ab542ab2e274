use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::connection::ConnectionInfo;
use super::transport::{KernelProcess, KernelTransport};
use super::zmq::ZmqTransport;
use super::KernelError;
use crate::env::EnvironmentHandle;
use crate::notebook::KernelSpecInfo;

pub type SharedProcess = Arc<Mutex<Box<dyn KernelProcess>>>;

/// Everything [`super::start_kernel`] needs from a freshly started kernel.
pub struct LaunchedKernel {
    pub transport: Box<dyn KernelTransport>,
    pub process: SharedProcess,
    pub key: Vec<u8>,
    /// Removed on shutdown.
    pub connection_file: Option<PathBuf>,
}

pub trait KernelLauncher: Send + Sync {
    fn launch(&self, env: &EnvironmentHandle, spec: &KernelSpecInfo, cwd: &Path) -> Result<LaunchedKernel, KernelError>;

    /// Kernels started by this launcher.
    fn registry(&self) -> &ProcessRegistry;
}

/// Tracks kernel processes so that callers can check for, and clean up,
/// kernels that outlived their session.
#[derive(Clone, Default)]
pub struct ProcessRegistry {
    inner: Arc<Mutex<Vec<SharedProcess>>>,
}

impl ProcessRegistry {
    pub fn register(&self, process: SharedProcess) {
        self.inner.lock().unwrap().push(process);
    }

    /// Number of registered kernels still running. Exited ones are dropped.
    pub fn live_count(&self) -> usize {
        let mut procs = self.inner.lock().unwrap();
        procs.retain(|p| p.lock().unwrap().is_alive());
        procs.len()
    }

    /// Total kernels ever registered that are still tracked.
    pub fn tracked(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn kill_all(&self) {
        let procs = std::mem::take(&mut *self.inner.lock().unwrap());
        for p in procs {
            let mut p = p.lock().unwrap();
            p.kill();
        }
    }
}

impl std::fmt::Debug for ProcessRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessRegistry")
            .field("tracked", &self.tracked())
            .finish()
    }
}

struct OsProcess {
    child: Child,
    stderr: Arc<Mutex<Vec<u8>>>,
    exited: bool,
}

impl KernelProcess for OsProcess {
    fn interrupt(&mut self) {
        if self.exited {
            return;
        }
        #[cfg(unix)]
        unsafe {
            libc::kill(self.child.id() as libc::pid_t, libc::SIGINT);
        }
    }

    fn kill(&mut self) {
        if !self.exited {
            let _ = self.child.kill();
            let _ = self.child.wait();
            self.exited = true;
        }
    }

    fn is_alive(&mut self) -> bool {
        if !self.exited && !matches!(self.child.try_wait(), Ok(None)) {
            self.exited = true;
        }
        !self.exited
    }

    fn wait_exit(&mut self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.is_alive() {
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        true
    }

    fn diagnostics(&mut self) -> String {
        String::from_utf8_lossy(&self.stderr.lock().unwrap()).into_owned()
    }
}

/// Launches an IPython kernel from the environment's interpreter and talks
/// to it over ZeroMQ.
#[derive(Debug, Clone)]
pub struct IpykernelLauncher {
    argv: Vec<String>,
    registry: ProcessRegistry,
}

impl Default for IpykernelLauncher {
    fn default() -> Self {
        Self::new()
    }
}

impl IpykernelLauncher {
    pub fn new() -> Self {
        Self::with_argv(["{python}", "-m", "ipykernel_launcher", "-f", "{connection_file}"])
    }

    /// A kernelspec-style argv; `{python}` and `{connection_file}` are
    /// substituted.
    pub fn with_argv<I: IntoIterator<Item = S>, S: Into<String>>(argv: I) -> Self {
        IpykernelLauncher {
            argv: argv.into_iter().map(Into::into).collect(),
            registry: ProcessRegistry::default(),
        }
    }
}

impl KernelLauncher for IpykernelLauncher {
    fn launch(&self, env: &EnvironmentHandle, _spec: &KernelSpecInfo, cwd: &Path) -> Result<LaunchedKernel, KernelError> {
        let python = &env.interpreter_path;
        if !python.is_file() {
            return Err(KernelError::LaunchFailed(format!("interpreter {} does not exist", python.display())));
        }
        let info = ConnectionInfo::generate()?;
        let file = cwd.join(format!(".repro-lens-kernel-{}.json", uuid::Uuid::new_v4()));
        info.write_file(&file)
            .map_err(|e| KernelError::LaunchFailed(format!("writing {}: {e}", file.display())))?;

        let args: Vec<String> = self
            .argv
            .iter()
            .map(|a| {
                a.replace("{python}", &python.to_string_lossy())
                    .replace("{connection_file}", &file.to_string_lossy())
            })
            .collect();
        let mut child = match Command::new(&args[0])
            .args(&args[1..])
            .current_dir(cwd)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => {
                let _ = std::fs::remove_file(&file);
                return Err(KernelError::LaunchFailed(format!("spawning {}: {e}", args[0])));
            }
        };
        let stderr = Arc::new(Mutex::new(Vec::new()));
        if let Some(mut pipe) = child.stderr.take() {
            let sink = stderr.clone();
            std::thread::spawn(move || {
                let mut buf = [0u8; 4096];
                while let Ok(n) = pipe.read(&mut buf) {
                    if n == 0 {
                        break;
                    }
                    sink.lock().unwrap().extend_from_slice(&buf[..n]);
                }
            });
        }
        let process: SharedProcess = Arc::new(Mutex::new(Box::new(OsProcess {
            child,
            stderr,
            exited: false,
        })));
        self.registry.register(process.clone());

        let transport = match ZmqTransport::connect(&info) {
            Ok(t) => t,
            Err(e) => {
                process.lock().unwrap().kill();
                let _ = std::fs::remove_file(&file);
                return Err(KernelError::LaunchFailed(e));
            }
        };
        Ok(LaunchedKernel {
            transport: Box::new(transport),
            process,
            key: info.key.into_bytes(),
            connection_file: Some(file),
        })
    }

    fn registry(&self) -> &ProcessRegistry {
        &self.registry
    }
}
