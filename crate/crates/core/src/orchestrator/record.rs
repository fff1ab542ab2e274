use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::kernel::{CellExecutionResult, ExecutionStatus};
use crate::notebook::{Notebook, NotebookError, ValidityReport};
use crate::version::LanguageVersion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityFlag {
    /// The requested major.minor was unavailable; a same-major version ran instead.
    InterpreterFallback,
    /// The repository declares no dependency manifest.
    NoManifest,
    /// The notebook declares no language version; the host default ran.
    DefaultInterpreter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum NotExecutedReason {
    ParseError(String),
    InvalidFormat(String),
    InvalidNotebook(Vec<String>),
    UnsupportedLanguage(String),
    ProvisioningFailed(String),
    KernelLaunchFailed(String),
}

impl NotExecutedReason {
    pub fn from_parse_error(err: &NotebookError) -> Self {
        match err {
            NotebookError::UnsupportedFormat(v) => NotExecutedReason::InvalidFormat(v.clone()),
            other => NotExecutedReason::ParseError(other.to_string()),
        }
    }

    /// Short category label used in summaries.
    pub fn label(&self) -> &'static str {
        match self {
            NotExecutedReason::ParseError(_) => "parse error",
            NotExecutedReason::InvalidFormat(_) => "invalid nbformat",
            NotExecutedReason::InvalidNotebook(_) => "invalid notebook",
            NotExecutedReason::UnsupportedLanguage(_) => "unsupported language",
            NotExecutedReason::ProvisioningFailed(_) => "provisioning failed",
            NotExecutedReason::KernelLaunchFailed(_) => "kernel launch failed",
        }
    }
}

impl fmt::Display for NotExecutedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NotExecutedReason::ParseError(d) => write!(f, "parse error: {d}"),
            NotExecutedReason::InvalidFormat(v) => write!(f, "invalid nbformat: {v}"),
            NotExecutedReason::InvalidNotebook(checks) => {
                write!(f, "invalid notebook: missing {}", checks.join(", "))
            }
            NotExecutedReason::UnsupportedLanguage(l) => write!(f, "unsupported language: {l}"),
            NotExecutedReason::ProvisioningFailed(d) => write!(f, "provisioning failed: {d}"),
            NotExecutedReason::KernelLaunchFailed(d) => write!(f, "kernel launch failed: {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalStatus {
    Completed,
    HaltedOnError { cell: usize },
    TimedOut { cell: usize },
    NotExecuted { reason: NotExecutedReason },
}

impl TerminalStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, TerminalStatus::Completed)
    }

    pub fn was_executed(&self) -> bool {
        !matches!(self, TerminalStatus::NotExecuted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub result: CellExecutionResult,
}

/// Retrospective provenance of one notebook re-execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotebookRunRecord {
    pub path: String,
    pub run_id: String,
    pub env_id: Option<String>,
    pub interpreter_version_used: Option<LanguageVersion>,
    pub fidelity_flags: BTreeSet<FidelityFlag>,
    pub cell_records: Vec<CellRecord>,
    pub terminal_status: TerminalStatus,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
}

impl NotebookRunRecord {
    pub fn not_executed(path: impl Into<String>, reason: NotExecutedReason) -> Self {
        let now = crate::kernel::now_millis();
        NotebookRunRecord {
            path: path.into(),
            run_id: ulid::Ulid::generate().to_string(),
            env_id: None,
            interpreter_version_used: None,
            fidelity_flags: BTreeSet::new(),
            cell_records: Vec::new(),
            terminal_status: TerminalStatus::NotExecuted { reason },
            started_at: now,
            ended_at: now,
        }
    }

    pub fn cell(&self, index: usize) -> Option<&CellExecutionResult> {
        self.cell_records
            .iter()
            .find(|c| c.index == index)
            .map(|c| &c.result)
    }

    /// The result of the cell named by a halting terminal status.
    pub fn halting_cell(&self) -> Option<&CellExecutionResult> {
        match self.terminal_status {
            TerminalStatus::HaltedOnError { cell } | TerminalStatus::TimedOut { cell } => {
                self.cell(cell)
            }
            _ => None,
        }
    }

    /// Derives the terminal status implied by `cell_records` alone: the first
    /// Error/Timeout/Aborted halts, otherwise the run completed.
    pub fn status_from_cells(cells: &[CellRecord]) -> TerminalStatus {
        for c in cells {
            match c.result.status {
                ExecutionStatus::Ok => {}
                ExecutionStatus::Error | ExecutionStatus::Aborted => {
                    return TerminalStatus::HaltedOnError { cell: c.index }
                }
                ExecutionStatus::Timeout => return TerminalStatus::TimedOut { cell: c.index },
            }
        }
        TerminalStatus::Completed
    }
}

/// How a scanned notebook file fared at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedNotebook {
    Parsed {
        notebook: Box<Notebook>,
        validity: ValidityReport,
    },
    Failed {
        error: NotebookError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotebookEntry {
    pub path: String,
    pub parsed: ParsedNotebook,
    pub record: NotebookRunRecord,
}

impl NotebookEntry {
    pub fn notebook(&self) -> Option<&Notebook> {
        match &self.parsed {
            ParsedNotebook::Parsed { notebook, .. } => Some(notebook),
            ParsedNotebook::Failed { .. } => None,
        }
    }

    pub fn validity(&self) -> Option<&ValidityReport> {
        match &self.parsed {
            ParsedNotebook::Parsed { validity, .. } => Some(validity),
            ParsedNotebook::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoRunReport {
    pub url: String,
    pub repo_ref: String,
    pub notebooks: Vec<NotebookEntry>,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub wall_clock_ms: i64,
}
