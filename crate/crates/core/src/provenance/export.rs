use chrono::{DateTime, SecondsFormat, Utc};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use sha2::{Digest, Sha256};

use super::graph::{ProvenanceGraph, Term, PROV, RL, XSD_DATETIME};
use crate::diff::normalize_outputs;
use crate::kernel::ExecutionStatus;
use crate::notebook::Notebook;
use crate::orchestrator::{NotebookRunRecord, RepoRunReport, TerminalStatus};

/// Output values longer than this are recorded as a sha256 digest.
pub const INLINE_OUTPUT_LIMIT: usize = 64 * 1024;

const PATH_ENCODE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~')
    .remove(b'/');

fn prov(term: &str) -> String {
    format!("{PROV}{term}")
}

fn rl(term: &str) -> String {
    format!("{RL}{term}")
}

fn timestamp(t: &DateTime<Utc>) -> Term {
    Term::typed(t.to_rfc3339_opts(SecondsFormat::Millis, true), XSD_DATETIME)
}

pub fn repo_iri(repo_ref: &str) -> String {
    format!("urn:repro-lens:{}", utf8_percent_encode(repo_ref, PATH_ENCODE))
}

/// `urn:repro-lens:<ref>:<path>[:<cell>][:run:<run-id>]`, with the path
/// percent-encoded so that it never contains `:`.
pub fn mint_iri(repo_ref: &str, path: &str, cell: Option<usize>, run_id: Option<&str>) -> String {
    let mut iri = format!("{}:{}", repo_iri(repo_ref), utf8_percent_encode(path, PATH_ENCODE));
    if let Some(cell) = cell {
        iri.push_str(&format!(":{cell}"));
    }
    if let Some(run) = run_id {
        iri.push_str(&format!(":run:{}", utf8_percent_encode(run, PATH_ENCODE)));
    }
    iri
}

pub fn env_iri(repo_ref: &str, env_id: &str) -> String {
    format!("{}:env:{}", repo_iri(repo_ref), utf8_percent_encode(env_id, PATH_ENCODE))
}

fn status_name(status: ExecutionStatus) -> &'static str {
    match status {
        ExecutionStatus::Ok => "ok",
        ExecutionStatus::Error => "error",
        ExecutionStatus::Timeout => "timeout",
        ExecutionStatus::Aborted => "aborted",
    }
}

fn terminal_name(status: &TerminalStatus) -> String {
    match status {
        TerminalStatus::Completed => "completed".into(),
        TerminalStatus::HaltedOnError { cell } => format!("halted on error at cell {cell}"),
        TerminalStatus::TimedOut { cell } => format!("timed out at cell {cell}"),
        TerminalStatus::NotExecuted { reason } => format!("not executed: {reason}"),
    }
}

/// The notebook as a plan: one `prov:Plan` node and one `rl:Step` per cell.
pub fn export_prospective(nb: &Notebook, repo_ref: &str) -> ProvenanceGraph {
    let mut g = ProvenanceGraph::new();
    let plan = mint_iri(repo_ref, &nb.source_path, None, None);
    g.add_type(&plan, &prov("Plan"));
    g.add_type(&plan, &prov("Entity"));
    g.add(&plan, rl("path"), Term::string(&nb.source_path));
    g.add(&plan, rl("cellCount"), Term::integer(nb.cells.len() as i64));
    g.add(
        &plan,
        rl("nbformat"),
        Term::string(format!("{}.{}", nb.format_major, nb.format_minor)),
    );
    if let Some(ks) = &nb.kernel_spec {
        g.add(&plan, rl("kernel"), Term::string(&ks.name));
    }
    if let Some(lang) = nb.language() {
        g.add(&plan, rl("language"), Term::string(lang));
    }
    if let Some(v) = &nb.language_version {
        g.add(&plan, rl("languageVersion"), Term::string(v));
    }

    for (position, cell) in nb.cells.iter().enumerate() {
        let step = mint_iri(repo_ref, &nb.source_path, Some(position), None);
        g.add_type(&step, &rl("Step"));
        g.add(&step, rl("inPlan"), Term::iri(&plan));
        g.add(&step, rl("cellIndex"), Term::integer(position as i64));
        g.add(&step, rl("cellKind"), Term::string(cell.kind.as_str()));
        g.add(&step, rl("source"), Term::string(&cell.source));
        if let Some(count) = cell.execution_count {
            g.add(&step, rl("executionCount"), Term::integer(count as i64));
        }
    }
    g
}

/// The execution record: a run node, an environment agent, and one
/// `prov:Activity` per executed cell with its generated output entities.
pub fn export_retrospective(record: &NotebookRunRecord, repo_ref: &str) -> ProvenanceGraph {
    let mut g = ProvenanceGraph::new();
    let plan = mint_iri(repo_ref, &record.path, None, None);
    let run = mint_iri(repo_ref, &record.path, None, Some(&record.run_id));
    g.add_type(&run, &rl("NotebookRun"));
    g.add(&run, rl("runId"), Term::string(&record.run_id));
    g.add(&run, rl("executesPlan"), Term::iri(&plan));
    g.add(&run, rl("terminalStatus"), Term::string(terminal_name(&record.terminal_status)));
    g.add(&run, rl("runStartedAt"), timestamp(&record.started_at));
    g.add(&run, rl("runEndedAt"), timestamp(&record.ended_at));
    for flag in &record.fidelity_flags {
        let name = serde_json::to_value(flag)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        g.add(&run, rl("fidelityFlag"), Term::string(name));
    }

    let env = record.env_id.as_ref().map(|id| {
        let env = env_iri(repo_ref, id);
        g.add_type(&env, &prov("Agent"));
        g.add_type(&env, &rl("Environment"));
        g.add(&env, rl("envId"), Term::string(id));
        if let Some(v) = &record.interpreter_version_used {
            g.add(&env, rl("interpreterVersion"), Term::string(v.to_string()));
        }
        g.add(&run, prov("wasAssociatedWith"), Term::iri(&env));
        env
    });

    for cell in &record.cell_records {
        let result = &cell.result;
        let step = mint_iri(repo_ref, &record.path, Some(cell.index), None);
        let activity = mint_iri(repo_ref, &record.path, Some(cell.index), Some(&record.run_id));
        g.add_type(&activity, &prov("Activity"));
        g.add(&activity, rl("planStep"), Term::iri(&step));
        g.add(&activity, rl("partOfRun"), Term::iri(&run));
        g.add(&activity, rl("cellIndex"), Term::integer(cell.index as i64));
        g.add(&activity, prov("startedAtTime"), timestamp(&result.started_at));
        g.add(&activity, prov("endedAtTime"), timestamp(&result.ended_at));
        g.add(&activity, rl("durationMs"), Term::integer(result.duration_ms));
        g.add(&activity, rl("status"), Term::string(status_name(result.status)));
        if let Some(count) = result.execution_count {
            g.add(&activity, rl("executionCount"), Term::integer(count as i64));
        }
        if result.stdin_requests > 0 {
            g.add(&activity, rl("stdinRequests"), Term::integer(result.stdin_requests as i64));
        }
        if let Some(env) = &env {
            g.add(&activity, prov("wasAssociatedWith"), Term::iri(env));
        }

        for (k, output) in normalize_outputs(&result.outputs).iter().enumerate() {
            let entity = format!("{activity}:output:{k}");
            g.add_type(&entity, &prov("Entity"));
            g.add_type(&entity, &rl("Output"));
            g.add(&entity, prov("wasGeneratedBy"), Term::iri(&activity));
            g.add(&entity, rl("outputIndex"), Term::integer(k as i64));
            g.add(&entity, rl("outputType"), Term::string(output.kind()));
            let value = output.render();
            if value.len() > INLINE_OUTPUT_LIMIT {
                g.add(&entity, rl("byteLength"), Term::integer(value.len() as i64));
                g.add(&entity, rl("sha256"), Term::string(hex::encode(Sha256::digest(value.as_bytes()))));
            } else {
                g.add(&entity, rl("value"), Term::string(value));
            }
        }
    }
    g
}

/// Prospective and retrospective graphs of every notebook in the report,
/// plus a repository node listing the plans as members.
pub fn export_repository(report: &RepoRunReport) -> ProvenanceGraph {
    let mut g = ProvenanceGraph::new();
    let repo = repo_iri(&report.repo_ref);
    g.add_type(&repo, &prov("Collection"));
    g.add(&repo, rl("url"), Term::string(&report.url));
    g.add(&repo, rl("ref"), Term::string(&report.repo_ref));
    for entry in &report.notebooks {
        g.add(
            &repo,
            prov("hadMember"),
            Term::iri(mint_iri(&report.repo_ref, &entry.path, None, None)),
        );
        if let Some(nb) = entry.notebook() {
            g.extend(&export_prospective(nb, &report.repo_ref));
        }
        g.extend(&export_retrospective(&entry.record, &report.repo_ref));
    }
    g
}
