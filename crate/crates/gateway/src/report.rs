//! The published result document of a job.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use repro_lens_core::analytics::{analyze_report, DashboardSummary, NotebookAnalysis, Outcome, StructureMetrics};
use repro_lens_core::diff::{normalize_outputs, NormalizedOutput, NotebookDiff};
use repro_lens_core::kernel::ExecutionStatus;
use repro_lens_core::orchestrator::{FidelityFlag, NotebookEntry, RepoRunReport, TerminalStatus};
use repro_lens_core::ValidityReport;

use crate::binder::binder_link;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryInfo {
    pub url: String,
    /// Resolved commit (or content digest of a local tree).
    #[serde(rename = "ref")]
    pub git_ref: String,
    pub requested_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub index: usize,
    pub status: ExecutionStatus,
    pub execution_count: Option<u32>,
    pub duration_ms: i64,
    pub stdin_requests: u32,
    pub outputs: Vec<NormalizedOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotebookRow {
    pub index: usize,
    pub path: String,
    pub outcome: Outcome,
    pub terminal_status: TerminalStatus,
    pub validity: Option<ValidityReport>,
    pub language: Option<String>,
    pub language_version: Option<String>,
    pub interpreter_version_used: Option<String>,
    pub env_id: Option<String>,
    pub fidelity_flags: BTreeSet<FidelityFlag>,
    pub structure: Option<StructureMetrics>,
    pub imports: BTreeSet<String>,
    pub diff: Option<NotebookDiff>,
    pub cells: Vec<CellRow>,
    pub binder_url: Option<String>,
    /// Turtle file relative to the report, when provenance was exported.
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleFrequency {
    pub module: String,
    pub notebooks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub wall_clock_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub repository: RepositoryInfo,
    pub summary: DashboardSummary,
    pub notebooks: Vec<NotebookRow>,
    /// Most imported first, ties by name.
    pub modules: Vec<ModuleFrequency>,
    pub timing: Timing,
}

/// Relative location of a notebook's Turtle file.
pub fn provenance_file(path: &str) -> String {
    format!("provenance/{path}.prov.ttl")
}

pub const REPOSITORY_PROVENANCE_FILE: &str = "provenance/repository.prov.ttl";

fn row(index: usize, entry: &NotebookEntry, analysis: NotebookAnalysis, report: &RepoRunReport, with_turtle: bool) -> NotebookRow {
    let nb = entry.notebook();
    let cells = entry
        .record
        .cell_records
        .iter()
        .map(|c| CellRow {
            index: c.index,
            status: c.result.status,
            execution_count: c.result.execution_count,
            duration_ms: c.result.duration_ms,
            stdin_requests: c.result.stdin_requests,
            outputs: normalize_outputs(&c.result.outputs),
        })
        .collect();
    NotebookRow {
        index,
        path: entry.path.clone(),
        outcome: analysis.outcome,
        terminal_status: entry.record.terminal_status.clone(),
        validity: entry.validity().cloned(),
        language: nb.and_then(|n| n.language()),
        language_version: nb.and_then(|n| n.language_version.clone()),
        interpreter_version_used: entry.record.interpreter_version_used.as_ref().map(|v| v.to_string()),
        env_id: entry.record.env_id.clone(),
        fidelity_flags: entry.record.fidelity_flags.clone(),
        structure: analysis.structure,
        imports: analysis.imports,
        diff: analysis.diff,
        cells,
        binder_url: binder_link(&report.url, &report.repo_ref, &entry.path).ok(),
        provenance: with_turtle.then(|| provenance_file(&entry.path)),
    }
}

/// Analyzes a run and lays it out as the report document.
pub fn build_report(report: &RepoRunReport, requested_ref: Option<&str>, with_turtle: bool) -> ReportDocument {
    let (analyses, summary) = analyze_report(report);
    let notebooks = report
        .notebooks
        .iter()
        .zip(analyses)
        .enumerate()
        .map(|(i, (entry, analysis))| row(i, entry, analysis, report, with_turtle))
        .collect();
    let mut modules: Vec<ModuleFrequency> = summary
        .imports
        .iter()
        .map(|(module, n)| ModuleFrequency {
            module: module.clone(),
            notebooks: *n,
        })
        .collect();
    modules.sort_by(|a, b| b.notebooks.cmp(&a.notebooks).then_with(|| a.module.cmp(&b.module)));
    ReportDocument {
        schema_version: SCHEMA_VERSION,
        repository: RepositoryInfo {
            url: report.url.clone(),
            git_ref: report.repo_ref.clone(),
            requested_ref: requested_ref.map(str::to_string),
        },
        summary,
        notebooks,
        modules,
        timing: Timing {
            started_at: report.started_at,
            ended_at: report.ended_at,
            wall_clock_ms: report.wall_clock_ms,
        },
    }
}
