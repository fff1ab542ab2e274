//! Outcome classification, structural and import statistics, dashboard
//! aggregation.

mod imports;
mod structure;
mod summary;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diff::{DiffOverall, NotebookDiff};
use crate::notebook::ValidityReport;
use crate::orchestrator::{NotExecutedReason, NotebookRunRecord, TerminalStatus};

pub use imports::{extract_imports, imports_in_source};
pub use structure::{compute_structure_metrics, StructureMetrics};
pub use summary::{
    aggregate, analyze_report, DashboardSummary, LanguageCount, NotebookAnalysis, OutcomeCounts,
    StructureSummary, Totals,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ename")]
pub enum ExceptionKind {
    ImportError,
    ModuleNotFoundError,
    FileNotFoundError,
    IOError,
    SyntaxError,
    Timeout,
    Other(String),
}

impl ExceptionKind {
    /// Exact match on the exception class name.
    pub fn from_ename(ename: &str) -> Self {
        match ename {
            "ImportError" => ExceptionKind::ImportError,
            "ModuleNotFoundError" => ExceptionKind::ModuleNotFoundError,
            "FileNotFoundError" => ExceptionKind::FileNotFoundError,
            "IOError" => ExceptionKind::IOError,
            "SyntaxError" => ExceptionKind::SyntaxError,
            other => ExceptionKind::Other(other.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ExceptionKind::ImportError => "ImportError",
            ExceptionKind::ModuleNotFoundError => "ModuleNotFoundError",
            ExceptionKind::FileNotFoundError => "FileNotFoundError",
            ExceptionKind::IOError => "IOError",
            ExceptionKind::SyntaxError => "SyntaxError",
            ExceptionKind::Timeout => "Timeout",
            ExceptionKind::Other(name) => name,
        }
    }
}

impl fmt::Display for ExceptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-notebook reproducibility verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    NotExecuted { reason: NotExecutedReason },
    Exception { kind: ExceptionKind, message: String },
    SameResults,
    DifferentResults,
}

impl Outcome {
    pub fn category(&self) -> &'static str {
        match self {
            Outcome::NotExecuted { .. } => "not_executed",
            Outcome::Exception { .. } => "exception",
            Outcome::SameResults => "same_results",
            Outcome::DifferentResults => "different_results",
        }
    }
}

/// Maps a run to its outcome.
///
/// `diff` is expected exactly when the record completed; a completed record
/// without a comparable diff is reported as [`Outcome::DifferentResults`]
/// since sameness cannot be shown.
pub fn classify_run(
    validity: Option<&ValidityReport>,
    record: &NotebookRunRecord,
    diff: Option<&NotebookDiff>,
) -> Outcome {
    if let TerminalStatus::NotExecuted { reason } = &record.terminal_status {
        return Outcome::NotExecuted {
            reason: reason.clone(),
        };
    }
    if let Some(v) = validity {
        if !v.overall_valid {
            return Outcome::NotExecuted {
                reason: NotExecutedReason::InvalidNotebook(
                    v.failed_checks().into_iter().map(String::from).collect(),
                ),
            };
        }
    }
    match &record.terminal_status {
        TerminalStatus::HaltedOnError { .. } => {
            let (kind, message) = match record.halting_cell().and_then(|c| c.final_error()) {
                Some((ename, evalue)) => (ExceptionKind::from_ename(ename), evalue.to_string()),
                None => (
                    ExceptionKind::Other("Aborted".into()),
                    "execution aborted".into(),
                ),
            };
            Outcome::Exception { kind, message }
        }
        TerminalStatus::TimedOut { cell } => Outcome::Exception {
            kind: ExceptionKind::Timeout,
            message: format!("cell {cell} exceeded its time budget"),
        },
        TerminalStatus::Completed => match diff.map(|d| &d.overall) {
            Some(DiffOverall::SameResults) => Outcome::SameResults,
            _ => Outcome::DifferentResults,
        },
        TerminalStatus::NotExecuted { .. } => unreachable!("handled above"),
    }
}
