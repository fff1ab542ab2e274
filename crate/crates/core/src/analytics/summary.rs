use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{classify_run, compute_structure_metrics, extract_imports, Outcome, StructureMetrics};
use crate::diff::{diff_notebook, CellVerdict, NotebookDiff};
use crate::orchestrator::{NotebookEntry, RepoRunReport};
use crate::version::LanguageVersion;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub notebooks: usize,
    pub valid: usize,
    pub executed: usize,
    pub completed: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub same_results: usize,
    pub different_results: usize,
    pub exceptions: usize,
    pub not_executed: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.same_results + self.different_results + self.exceptions + self.not_executed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageCount {
    pub language: String,
    /// `major.minor`, or `unknown`.
    pub version: String,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub notebooks_with_output_and_execution_count: usize,
    pub notebooks_with_ascending_execution_counts: usize,
    pub code_cells: usize,
    pub markdown_cells: usize,
    pub raw_cells: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DashboardSummary {
    pub totals: Totals,
    pub outcomes: OutcomeCounts,
    pub exceptions_by_kind: BTreeMap<String, usize>,
    pub not_executed_by_reason: BTreeMap<String, usize>,
    pub languages: Vec<LanguageCount>,
    pub structure: StructureSummary,
    /// Module name -> number of notebooks importing it.
    pub imports: BTreeMap<String, usize>,
    /// Code cells whose stored outputs were empty while the rerun produced some.
    pub original_empty_cells: usize,
}

/// Everything derived for one notebook entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotebookAnalysis {
    pub path: String,
    pub outcome: Outcome,
    pub diff: Option<NotebookDiff>,
    pub structure: Option<StructureMetrics>,
    pub imports: BTreeSet<String>,
}

fn analyze_entry(entry: &NotebookEntry) -> NotebookAnalysis {
    let diff = match entry.notebook() {
        Some(nb) if entry.record.terminal_status.is_completed() => Some(diff_notebook(nb, &entry.record)),
        _ => None,
    };
    let outcome = classify_run(entry.validity(), &entry.record, diff.as_ref());
    NotebookAnalysis {
        path: entry.path.clone(),
        outcome,
        diff,
        structure: entry.notebook().map(compute_structure_metrics),
        imports: entry.notebook().map(extract_imports).unwrap_or_default(),
    }
}

/// Diffs, classifies and aggregates a whole report.
pub fn analyze_report(report: &RepoRunReport) -> (Vec<NotebookAnalysis>, DashboardSummary) {
    let analyses: Vec<NotebookAnalysis> = report.notebooks.iter().map(analyze_entry).collect();
    let diffs: BTreeMap<String, NotebookDiff> = analyses
        .iter()
        .filter_map(|a| a.diff.clone().map(|d| (a.path.clone(), d)))
        .collect();
    let outcomes: BTreeMap<String, Outcome> = analyses
        .iter()
        .map(|a| (a.path.clone(), a.outcome.clone()))
        .collect();
    let summary = aggregate(report, &diffs, &outcomes);
    (analyses, summary)
}

/// Builds the dashboard summary. `diffs` and `outcomes` are keyed by notebook
/// path; an entry missing from `outcomes` is classified on the spot.
pub fn aggregate(
    report: &RepoRunReport,
    diffs: &BTreeMap<String, NotebookDiff>,
    outcomes: &BTreeMap<String, Outcome>,
) -> DashboardSummary {
    let mut s = DashboardSummary::default();
    let mut languages: BTreeMap<(String, String), usize> = BTreeMap::new();

    for entry in &report.notebooks {
        s.totals.notebooks += 1;
        if entry.validity().is_some_and(|v| v.overall_valid) {
            s.totals.valid += 1;
        }
        if entry.record.terminal_status.was_executed() {
            s.totals.executed += 1;
        }
        if entry.record.terminal_status.is_completed() {
            s.totals.completed += 1;
        }

        let diff = diffs.get(&entry.path);
        let outcome = outcomes
            .get(&entry.path)
            .cloned()
            .unwrap_or_else(|| classify_run(entry.validity(), &entry.record, diff));
        match &outcome {
            Outcome::SameResults => s.outcomes.same_results += 1,
            Outcome::DifferentResults => s.outcomes.different_results += 1,
            Outcome::Exception { kind, .. } => {
                s.outcomes.exceptions += 1;
                *s.exceptions_by_kind.entry(kind.name().to_string()).or_default() += 1;
            }
            Outcome::NotExecuted { reason } => {
                s.outcomes.not_executed += 1;
                *s.not_executed_by_reason.entry(reason.label().to_string()).or_default() += 1;
            }
        }
        if let Some(diff) = diff {
            s.original_empty_cells += diff
                .cells
                .iter()
                .filter(|c| c.verdict == CellVerdict::OriginalEmpty)
                .count();
        }

        let Some(nb) = entry.notebook() else {
            continue;
        };
        let language = nb.language().unwrap_or_else(|| "unknown".into());
        let version = nb
            .language_version
            .as_deref()
            .and_then(|v| v.parse::<LanguageVersion>().ok())
            .map(|v| v.major_minor().to_string())
            .unwrap_or_else(|| "unknown".into());
        *languages.entry((language, version)).or_default() += 1;

        let m = compute_structure_metrics(nb);
        s.structure.code_cells += m.code_cells;
        s.structure.markdown_cells += m.markdown_cells;
        s.structure.raw_cells += m.raw_cells;
        if m.all_code_cells_have_output_and_count {
            s.structure.notebooks_with_output_and_execution_count += 1;
        }
        if m.ascending_execution_counts {
            s.structure.notebooks_with_ascending_execution_counts += 1;
        }
        for module in extract_imports(nb) {
            *s.imports.entry(module).or_default() += 1;
        }
    }

    s.languages = languages
        .into_iter()
        .map(|((language, version), count)| LanguageCount {
            language,
            version,
            count,
        })
        .collect();
    s
}
