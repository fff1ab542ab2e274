use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::record::{
    CellRecord, FidelityFlag, NotExecutedReason, NotebookEntry, NotebookRunRecord, ParsedNotebook, RepoRunReport,
    TerminalStatus,
};
use crate::env::{plan_environment, EnvError, EnvManager, EnvironmentHandle, EnvironmentPlan, Selection};
use crate::ingest::{discover_environment, scan_notebooks, RepositorySnapshot};
use crate::kernel::{
    now_millis, start_kernel, CellExecutionResult, ExecutionStatus, KernelError, KernelLauncher, SessionConfig,
};
use crate::notebook::{validate, KernelSpecInfo, Notebook, Output};
use crate::version::LanguageVersion;

pub const DEFAULT_CELL_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_NOTEBOOK_TIMEOUT: Duration = Duration::from_secs(300);

/// Kernel languages this build can execute.
pub const SUPPORTED_LANGUAGES: &[&str] = &["python"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrchestratorConfig {
    pub cell_timeout: Duration,
    /// Budget for all cells of one notebook together.
    pub notebook_timeout: Duration,
    /// Notebooks run at the same time within one repository.
    pub parallelism: usize,
    pub session: SessionConfig,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            cell_timeout: DEFAULT_CELL_TIMEOUT,
            notebook_timeout: DEFAULT_NOTEBOOK_TIMEOUT,
            parallelism: 1,
            session: SessionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgressEvent {
    NotebookStarted { path: String },
    CellFinished { path: String, index: usize, status: ExecutionStatus },
    NotebookFinished { path: String, status: TerminalStatus },
}

pub type ProgressSink = Arc<dyn Fn(ProgressEvent) + Send + Sync>;

/// Runs notebooks: environment, kernel, cells in document order.
pub struct Orchestrator {
    envs: Arc<EnvManager>,
    launcher: Arc<dyn KernelLauncher>,
    config: OrchestratorConfig,
    progress: Option<ProgressSink>,
    /// Provisioning outcomes of this orchestrator, failures included, so a
    /// failed environment is not rebuilt for every notebook that needs it.
    prepared: Mutex<HashMap<String, Result<EnvironmentHandle, EnvError>>>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator").field("config", &self.config).finish()
    }
}

fn default_spec() -> KernelSpecInfo {
    KernelSpecInfo {
        name: "python3".into(),
        display_name: Some("Python 3".into()),
    }
}

fn fidelity_flags(handle: &EnvironmentHandle, manifests_found: bool) -> BTreeSet<FidelityFlag> {
    let mut flags = BTreeSet::new();
    match handle.selection {
        Selection::Fallback => {
            flags.insert(FidelityFlag::InterpreterFallback);
        }
        Selection::Default => {
            flags.insert(FidelityFlag::DefaultInterpreter);
        }
        Selection::Exact => {}
    }
    if !manifests_found {
        flags.insert(FidelityFlag::NoManifest);
    }
    flags
}

/// A cell the kernel died under, recorded as an error.
fn kernel_died(err: &KernelError, started: chrono::DateTime<chrono::Utc>) -> CellExecutionResult {
    CellExecutionResult::new(
        ExecutionStatus::Error,
        vec![Output::error("KernelDied", err.to_string())],
        None,
        started,
        now_millis(),
    )
}

impl Orchestrator {
    pub fn new(envs: Arc<EnvManager>, launcher: Arc<dyn KernelLauncher>) -> Self {
        Orchestrator {
            envs,
            launcher,
            config: OrchestratorConfig::default(),
            progress: None,
            prepared: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_config(mut self, config: OrchestratorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_progress(mut self, sink: ProgressSink) -> Self {
        self.progress = Some(sink);
        self
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn launcher(&self) -> &Arc<dyn KernelLauncher> {
        &self.launcher
    }

    fn provision(&self, plan: &EnvironmentPlan) -> Result<EnvironmentHandle, EnvError> {
        if let Some(done) = self.prepared.lock().unwrap().get(&plan.env_id) {
            return done.clone();
        }
        let result = self.envs.provision(plan);
        self.prepared
            .lock()
            .unwrap()
            .insert(plan.env_id.clone(), result.clone());
        result
    }

    /// Provisions the environment of every runnable notebook ahead of
    /// execution. Returns `(env_id, error)` for each environment, `None` on
    /// success; notebooks later reuse these outcomes.
    pub fn prepare_environments(&self, snapshot: &RepositorySnapshot) -> Vec<(String, Option<EnvError>)> {
        let manifests = discover_environment(snapshot);
        let mut seen = BTreeSet::new();
        let mut outcomes = Vec::new();
        for (_, parsed) in scan_notebooks(snapshot) {
            let Ok(nb) = parsed else { continue };
            let runnable = validate(&nb).overall_valid
                && nb.language().is_some_and(|l| SUPPORTED_LANGUAGES.contains(&l.as_str()));
            if !runnable {
                continue;
            }
            let plan = plan_environment(snapshot, &manifests, &nb);
            if seen.insert(plan.env_id.clone()) {
                let err = self.provision(&plan).err();
                outcomes.push((plan.env_id, err));
            }
        }
        outcomes
    }

    fn emit(&self, event: ProgressEvent) {
        if let Some(sink) = &self.progress {
            sink(event);
        }
    }

    /// Re-executes one parsed notebook. Never fails: every problem ends up in
    /// the record's terminal status.
    pub fn reproduce_notebook(&self, nb: &Notebook, snapshot: &RepositorySnapshot) -> NotebookRunRecord {
        let path = nb.source_path.clone();
        self.emit(ProgressEvent::NotebookStarted { path: path.clone() });
        let record = self.run_notebook(nb, snapshot);
        self.emit(ProgressEvent::NotebookFinished {
            path,
            status: record.terminal_status.clone(),
        });
        record
    }

    fn run_notebook(&self, nb: &Notebook, snapshot: &RepositorySnapshot) -> NotebookRunRecord {
        let path = nb.source_path.as_str();
        let started_at = now_millis();
        let not_executed = |reason: NotExecutedReason| {
            let mut r = NotebookRunRecord::not_executed(path, reason);
            r.started_at = started_at;
            r
        };

        let validity = validate(nb);
        if !validity.overall_valid {
            return not_executed(NotExecutedReason::InvalidNotebook(
                validity.failed_checks().into_iter().map(String::from).collect(),
            ));
        }
        let language = nb.language().unwrap_or_else(|| "unknown".into());
        if !SUPPORTED_LANGUAGES.contains(&language.as_str()) {
            return not_executed(NotExecutedReason::UnsupportedLanguage(language));
        }

        let manifests = discover_environment(snapshot);
        let plan = plan_environment(snapshot, &manifests, nb);
        let handle = match self.provision(&plan) {
            Ok(h) => h,
            Err(e) => {
                let detail = match &e {
                    EnvError::ProvisionFailed { step, log } => {
                        let tail: Vec<&str> = log.lines().rev().take(5).collect();
                        format!("{step}: {}", tail.into_iter().rev().collect::<Vec<_>>().join("\n"))
                    }
                    other => other.to_string(),
                };
                let mut r = not_executed(NotExecutedReason::ProvisioningFailed(detail));
                r.env_id = Some(plan.env_id);
                return r;
            }
        };

        let mut record = not_executed(NotExecutedReason::KernelLaunchFailed(String::new()));
        record.env_id = Some(handle.env_id.clone());
        record.interpreter_version_used = Some(handle.actual_interpreter_version);
        record.fidelity_flags = fidelity_flags(&handle, !manifests.is_empty());

        let cwd = snapshot
            .root
            .join(path)
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| snapshot.root.clone());
        let spec = nb.kernel_spec.clone().unwrap_or_else(default_spec);
        let mut session = match start_kernel(self.launcher.as_ref(), &handle, &spec, &cwd, self.config.session.clone()) {
            Ok(s) => s,
            Err(e) => {
                record.terminal_status = TerminalStatus::NotExecuted {
                    reason: NotExecutedReason::KernelLaunchFailed(e.to_string()),
                };
                record.ended_at = now_millis();
                return record;
            }
        };
        if let Some(v) = session.language_version().and_then(|v| v.parse::<LanguageVersion>().ok()) {
            record.interpreter_version_used = Some(v);
        }

        let deadline = Instant::now() + self.config.notebook_timeout;
        let mut cells = Vec::new();
        for cell in nb.code_cells() {
            let budget = self
                .config
                .cell_timeout
                .min(deadline.saturating_duration_since(Instant::now()));
            let result = if budget.is_zero() {
                let now = now_millis();
                CellExecutionResult::new(ExecutionStatus::Timeout, Vec::new(), None, now, now)
            } else {
                let started = now_millis();
                match session.execute(&cell.source, budget) {
                    Ok(r) => r,
                    Err(e) => kernel_died(&e, started),
                }
            };
            let status = result.status;
            cells.push(CellRecord {
                index: cell.index,
                result,
            });
            self.emit(ProgressEvent::CellFinished {
                path: path.to_string(),
                index: cell.index,
                status,
            });
            if status != ExecutionStatus::Ok {
                break;
            }
        }
        session.shutdown();

        record.terminal_status = NotebookRunRecord::status_from_cells(&cells);
        record.cell_records = cells;
        record.ended_at = now_millis();
        record
    }

    /// Processes every notebook of the snapshot in path order.
    pub fn reproduce_repository(&self, snapshot: &RepositorySnapshot) -> RepoRunReport {
        let started_at = now_millis();
        let clock = Instant::now();
        let scanned = scan_notebooks(snapshot);
        let slots: Mutex<Vec<Option<NotebookEntry>>> = Mutex::new(vec![None; scanned.len()]);
        let next = AtomicUsize::new(0);
        let workers = self.config.parallelism.clamp(1, scanned.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((path, parsed)) = scanned.get(i) else { break };
                    let entry = match parsed {
                        Ok(nb) => NotebookEntry {
                            path: path.clone(),
                            record: self.reproduce_notebook(nb, snapshot),
                            parsed: ParsedNotebook::Parsed {
                                validity: validate(nb),
                                notebook: Box::new(nb.clone()),
                            },
                        },
                        Err(error) => {
                            let record = NotebookRunRecord::not_executed(path, NotExecutedReason::from_parse_error(error));
                            self.emit(ProgressEvent::NotebookFinished {
                                path: path.clone(),
                                status: record.terminal_status.clone(),
                            });
                            NotebookEntry {
                                path: path.clone(),
                                record,
                                parsed: ParsedNotebook::Failed { error: error.clone() },
                            }
                        }
                    };
                    slots.lock().unwrap()[i] = Some(entry);
                });
            }
        });
        let notebooks = slots.into_inner().unwrap().into_iter().flatten().collect();
        RepoRunReport {
            url: snapshot.url.clone(),
            repo_ref: snapshot.repo_ref.clone(),
            notebooks,
            started_at,
            ended_at: now_millis(),
            wall_clock_ms: clock.elapsed().as_millis() as i64,
        }
    }
}
