//! Content-aware comparison of stored and reproduced cell outputs.
//!
//! Outputs are first reduced to a canonical [`NormalizedOutput`] form:
//! adjacent streams of the same name are merged, ANSI CSI sequences and
//! trailing whitespace are removed from stream text, MIME bundles are sorted
//! and newline-normalized, binary payloads collapse to `(length, sha256)` and
//! errors keep only `(ename, evalue)`. Execution counts and tracebacks never
//! take part in a comparison.

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::notebook::{MimeBundle, MimePayload, Notebook, Output, StreamName};
use crate::orchestrator::{NotebookRunRecord, TerminalStatus};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum NormalizedPayload {
    Text { mime: String, text: String },
    Binary { mime: String, byte_length: usize, sha256: String },
    Json { mime: String, canonical: String },
}

impl NormalizedPayload {
    pub fn mime(&self) -> &str {
        match self {
            NormalizedPayload::Text { mime, .. }
            | NormalizedPayload::Binary { mime, .. }
            | NormalizedPayload::Json { mime, .. } => mime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalizedOutput {
    Stream { name: StreamName, text: String },
    ExecuteResult { data: Vec<NormalizedPayload> },
    DisplayData { data: Vec<NormalizedPayload> },
    Error { ename: String, evalue: String },
}

impl NormalizedOutput {
    pub fn kind(&self) -> &'static str {
        match self {
            NormalizedOutput::Stream { .. } => "stream",
            NormalizedOutput::ExecuteResult { .. } => "execute_result",
            NormalizedOutput::DisplayData { .. } => "display_data",
            NormalizedOutput::Error { .. } => "error",
        }
    }

    /// Flat text rendering used for reports and provenance literals.
    pub fn render(&self) -> String {
        match self {
            NormalizedOutput::Stream { name, text } => format!("[{}] {text}", name.as_str()),
            NormalizedOutput::ExecuteResult { data } | NormalizedOutput::DisplayData { data } => data
                .iter()
                .map(|p| match p {
                    NormalizedPayload::Text { mime, text } => format!("{mime}: {text}"),
                    NormalizedPayload::Binary {
                        mime,
                        byte_length,
                        sha256,
                    } => format!("{mime}: <{byte_length} bytes sha256:{sha256}>"),
                    NormalizedPayload::Json { mime, canonical } => format!("{mime}: {canonical}"),
                })
                .collect::<Vec<_>>()
                .join("\n"),
            NormalizedOutput::Error { ename, evalue } => format!("{ename}: {evalue}"),
        }
    }
}

/// Removes ANSI CSI sequences (`ESC [ params intermediates final`) and any
/// stray ESC characters, so the result never contains ESC.
pub fn strip_ansi(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\u{1b}' {
            out.push(c);
            continue;
        }
        if chars.peek() != Some(&'[') {
            continue;
        }
        chars.next();
        // Parameter bytes 0x30-0x3F, intermediates 0x20-0x2F, final 0x40-0x7E.
        while chars.peek().is_some_and(|c| ('\u{30}'..='\u{3f}').contains(c)) {
            chars.next();
        }
        while chars.peek().is_some_and(|c| ('\u{20}'..='\u{2f}').contains(c)) {
            chars.next();
        }
        if chars.peek().is_some_and(|c| ('\u{40}'..='\u{7e}').contains(c)) {
            chars.next();
        }
    }
    out
}

pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn strip_trailing_whitespace(text: &str) -> String {
    text.split('\n')
        .map(|line| line.trim_end())
        .collect::<Vec<_>>()
        .join("\n")
}

fn normalize_stream_text(text: &str) -> String {
    strip_trailing_whitespace(&normalize_newlines(&strip_ansi(text)))
}

fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn decode_base64(text: &str) -> Vec<u8> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    base64::engine::general_purpose::STANDARD
        .decode(compact.as_bytes())
        .unwrap_or_else(|_| text.as_bytes().to_vec())
}

fn normalize_bundle(data: &MimeBundle) -> Vec<NormalizedPayload> {
    // BTreeMap iteration is already sorted by MIME type.
    data.iter()
        .map(|(mime, payload)| match payload {
            MimePayload::Text(t) => NormalizedPayload::Text {
                mime: mime.clone(),
                text: normalize_newlines(t),
            },
            MimePayload::Base64(b) => {
                let bytes = decode_base64(b);
                NormalizedPayload::Binary {
                    mime: mime.clone(),
                    byte_length: bytes.len(),
                    sha256: digest_hex(&bytes),
                }
            }
            MimePayload::Json(v) => NormalizedPayload::Json {
                mime: mime.clone(),
                canonical: serde_json::to_string(v).unwrap_or_default(),
            },
        })
        .collect()
}

fn lift(output: &Output) -> NormalizedOutput {
    match output {
        Output::Stream { name, text } => NormalizedOutput::Stream {
            name: *name,
            text: text.clone(),
        },
        Output::ExecuteResult { data, .. } => NormalizedOutput::ExecuteResult {
            data: normalize_bundle(data),
        },
        Output::DisplayData { data, .. } => NormalizedOutput::DisplayData {
            data: normalize_bundle(data),
        },
        Output::Error { ename, evalue, .. } => NormalizedOutput::Error {
            ename: ename.clone(),
            evalue: evalue.clone(),
        },
    }
}

/// Brings an already-lifted list to canonical form. Applying it to its own
/// output is a no-op.
pub fn canonicalize(list: Vec<NormalizedOutput>) -> Vec<NormalizedOutput> {
    let mut merged: Vec<NormalizedOutput> = Vec::with_capacity(list.len());
    for item in list {
        if let (
            Some(NormalizedOutput::Stream { name: prev, text }),
            NormalizedOutput::Stream { name, text: more },
        ) = (merged.last_mut(), &item)
        {
            if prev == name {
                text.push_str(more);
                continue;
            }
        }
        merged.push(item);
    }
    merged
        .into_iter()
        .map(|o| match o {
            NormalizedOutput::Stream { name, text } => NormalizedOutput::Stream {
                name,
                text: normalize_stream_text(&text),
            },
            NormalizedOutput::ExecuteResult { data } => NormalizedOutput::ExecuteResult {
                data: canonical_payloads(data),
            },
            NormalizedOutput::DisplayData { data } => NormalizedOutput::DisplayData {
                data: canonical_payloads(data),
            },
            err @ NormalizedOutput::Error { .. } => err,
        })
        .collect()
}

fn canonical_payloads(mut data: Vec<NormalizedPayload>) -> Vec<NormalizedPayload> {
    for p in &mut data {
        if let NormalizedPayload::Text { text, .. } = p {
            *text = normalize_newlines(text);
        }
    }
    data.sort_by(|a, b| a.mime().cmp(b.mime()).then_with(|| a.cmp(b)));
    data
}

pub fn normalize_outputs(outputs: &[Output]) -> Vec<NormalizedOutput> {
    canonicalize(outputs.iter().map(lift).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVerdict {
    Same,
    Different,
    /// No stored output to compare against; the reproduction produced some.
    OriginalEmpty,
    /// The run record holds no result for this cell.
    ReproducedMissing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffDetail {
    pub position: usize,
    pub original: Option<NormalizedOutput>,
    pub reproduced: Option<NormalizedOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDiff {
    pub index: usize,
    pub verdict: CellVerdict,
    pub detail: Vec<DiffDetail>,
}

impl CellDiff {
    /// True for verdicts that make a notebook's results differ.
    pub fn is_difference(&self) -> bool {
        matches!(
            self.verdict,
            CellVerdict::Different | CellVerdict::ReproducedMissing
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum DiffOverall {
    SameResults,
    DifferentResults,
    NotComparable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookDiff {
    pub cells: Vec<CellDiff>,
    pub overall: DiffOverall,
}

impl NotebookDiff {
    /// Indices of cells whose verdict makes the results differ.
    pub fn differing_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.is_difference())
            .map(|c| c.index)
            .collect()
    }
}

fn positional_detail(original: &[NormalizedOutput], reproduced: &[NormalizedOutput]) -> Vec<DiffDetail> {
    (0..original.len().max(reproduced.len()))
        .filter_map(|position| {
            let o = original.get(position);
            let r = reproduced.get(position);
            (o != r).then(|| DiffDetail {
                position,
                original: o.cloned(),
                reproduced: r.cloned(),
            })
        })
        .collect()
}

pub fn diff_cell(original: &[Output], reproduced: &[Output], index: usize) -> CellDiff {
    let original = normalize_outputs(original);
    let reproduced = normalize_outputs(reproduced);
    let (verdict, detail) = if original == reproduced {
        (CellVerdict::Same, Vec::new())
    } else if original.is_empty() {
        (CellVerdict::OriginalEmpty, positional_detail(&original, &reproduced))
    } else {
        (CellVerdict::Different, positional_detail(&original, &reproduced))
    };
    CellDiff {
        index,
        verdict,
        detail,
    }
}

pub fn diff_notebook(original: &Notebook, record: &NotebookRunRecord) -> NotebookDiff {
    let reason = match &record.terminal_status {
        TerminalStatus::Completed => None,
        TerminalStatus::HaltedOnError { .. } => Some("execution halted"),
        TerminalStatus::TimedOut { .. } => Some("execution timed out"),
        TerminalStatus::NotExecuted { .. } => Some("not executed"),
    };
    if let Some(reason) = reason {
        return NotebookDiff {
            cells: Vec::new(),
            overall: DiffOverall::NotComparable(reason.to_string()),
        };
    }

    let cells: Vec<CellDiff> = original
        .code_cells()
        .map(|cell| match record.cell(cell.index) {
            Some(result) => diff_cell(&cell.outputs, &result.outputs, cell.index),
            None => CellDiff {
                index: cell.index,
                verdict: CellVerdict::ReproducedMissing,
                detail: positional_detail(&normalize_outputs(&cell.outputs), &[]),
            },
        })
        .collect();
    let overall = if cells.iter().any(CellDiff::is_difference) {
        DiffOverall::DifferentResults
    } else {
        DiffOverall::SameResults
    };
    NotebookDiff { cells, overall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{CellExecutionResult, ExecutionStatus};
    use crate::notebook::Cell;
    use crate::orchestrator::{CellRecord, NotExecutedReason};
    use proptest::prelude::*;

    fn stdout(t: &str) -> Output {
        Output::stream(StreamName::Stdout, t)
    }

    #[test]
    fn adjacent_streams_coalesce() {
        let n = normalize_outputs(&[stdout("a"), stdout("b")]);
        assert_eq!(
            n,
            vec![NormalizedOutput::Stream {
                name: StreamName::Stdout,
                text: "ab".into()
            }]
        );
        assert!(normalize_outputs(&[]).is_empty());
    }

    #[test]
    fn interleaved_streams_stay_separate() {
        let n = normalize_outputs(&[
            stdout("a"),
            Output::stream(StreamName::Stderr, "e"),
            stdout("b"),
        ]);
        assert_eq!(n.len(), 3);
    }

    #[test]
    fn execution_count_is_ignored() {
        assert_eq!(
            normalize_outputs(&[Output::text_result("4", Some(3))]),
            normalize_outputs(&[Output::text_result("4", Some(7))])
        );
    }

    #[test]
    fn ansi_and_trailing_whitespace_removed() {
        let n = normalize_outputs(&[stdout("\u{1b}[31mred\u{1b}[0m   \r\nnext\t\n")]);
        assert_eq!(
            n,
            vec![NormalizedOutput::Stream {
                name: StreamName::Stdout,
                text: "red\nnext\n".into()
            }]
        );
        assert_eq!(strip_ansi("\u{1b}\u{1b}[0m[31mx"), "[31mx");
    }

    #[test]
    fn tracebacks_dropped() {
        let a = Output::Error {
            ename: "ValueError".into(),
            evalue: "bad".into(),
            traceback: vec!["/home/a/x.py line 3".into()],
        };
        let b = Output::Error {
            ename: "ValueError".into(),
            evalue: "bad".into(),
            traceback: vec!["/srv/b/x.py line 9".into()],
        };
        assert_eq!(diff_cell(&[a], &[b], 0).verdict, CellVerdict::Same);
    }

    #[test]
    fn binary_payloads_compare_by_digest() {
        let img = |b64: &str| {
            let mut data = MimeBundle::new();
            data.insert("image/png".into(), MimePayload::Base64(b64.into()));
            Output::DisplayData {
                data,
                metadata: Default::default(),
            }
        };
        // Same bytes, different line wrapping of the base64 text.
        assert_eq!(
            diff_cell(&[img("AAEC\nAw==")], &[img("AAECAw==\n")], 0).verdict,
            CellVerdict::Same
        );
        let d = diff_cell(&[img("AAECAw==")], &[img("AAECBA==")], 0);
        assert_eq!(d.verdict, CellVerdict::Different);
        match &d.detail[0].original {
            Some(NormalizedOutput::DisplayData { data }) => match &data[0] {
                NormalizedPayload::Binary { byte_length, .. } => assert_eq!(*byte_length, 4),
                other => panic!("unexpected payload {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn verdicts() {
        let same = [stdout("x")];
        assert_eq!(diff_cell(&same, &same, 0).verdict, CellVerdict::Same);
        assert!(diff_cell(&same, &same, 0).detail.is_empty());

        let d = diff_cell(&[Output::text_result("2", Some(1))], &[Output::text_result("3", Some(1))], 4);
        assert_eq!(d.verdict, CellVerdict::Different);
        assert_eq!(d.index, 4);
        assert_eq!(d.detail.len(), 1);
        assert_eq!(d.detail[0].position, 0);

        assert_eq!(diff_cell(&[], &[stdout("x")], 0).verdict, CellVerdict::OriginalEmpty);
        assert_eq!(diff_cell(&[stdout("x")], &[], 0).verdict, CellVerdict::Different);
    }

    fn record_for(nb: &Notebook, outputs: &[Vec<Output>], status: TerminalStatus) -> NotebookRunRecord {
        let mut rec = NotebookRunRecord::not_executed(&nb.source_path, NotExecutedReason::ParseError(String::new()));
        rec.terminal_status = status;
        rec.cell_records = nb
            .code_cells()
            .zip(outputs)
            .map(|(c, outs)| CellRecord {
                index: c.index,
                result: CellExecutionResult::new(
                    ExecutionStatus::Ok,
                    outs.clone(),
                    None,
                    rec.started_at,
                    rec.ended_at,
                ),
            })
            .collect();
        rec
    }

    fn notebook_with(outputs: &[Vec<Output>]) -> Notebook {
        let mut nb = Notebook::empty("n.ipynb");
        nb.cells.push(Cell::markdown(0, "# title"));
        for (i, outs) in outputs.iter().enumerate() {
            nb.cells.push(Cell {
                outputs: outs.clone(),
                execution_count: Some(i as u32 + 1),
                ..Cell::code(i + 1, "x")
            });
        }
        nb
    }

    #[test]
    fn notebook_level_verdicts() {
        let outs = vec![vec![stdout("a\n")], vec![Output::text_result("2", Some(2))]];
        let nb = notebook_with(&outs);
        let same = diff_notebook(&nb, &record_for(&nb, &outs, TerminalStatus::Completed));
        assert_eq!(same.overall, DiffOverall::SameResults);
        assert_eq!(same.cells.len(), 2);

        let mut changed = outs.clone();
        changed[0] = vec![stdout("2024-01-01 12:00:01\n")];
        let diff = diff_notebook(&nb, &record_for(&nb, &changed, TerminalStatus::Completed));
        assert_eq!(diff.overall, DiffOverall::DifferentResults);
        assert_eq!(diff.differing_cells(), vec![1]);

        let halted = diff_notebook(
            &nb,
            &record_for(&nb, &outs, TerminalStatus::HaltedOnError { cell: 1 }),
        );
        assert_eq!(halted.overall, DiffOverall::NotComparable("execution halted".into()));
    }

    #[test]
    fn empty_originals_do_not_make_results_differ() {
        let stored = vec![vec![], vec![stdout("a")]];
        let nb = notebook_with(&stored);
        let reproduced = vec![vec![stdout("fresh")], vec![stdout("a")]];
        let diff = diff_notebook(&nb, &record_for(&nb, &reproduced, TerminalStatus::Completed));
        assert_eq!(diff.cells[0].verdict, CellVerdict::OriginalEmpty);
        assert_eq!(diff.overall, DiffOverall::SameResults);
    }

    #[test]
    fn missing_cell_record() {
        let outs = vec![vec![stdout("a")], vec![stdout("b")]];
        let nb = notebook_with(&outs);
        let mut rec = record_for(&nb, &outs, TerminalStatus::Completed);
        rec.cell_records.pop();
        let diff = diff_notebook(&nb, &rec);
        assert_eq!(diff.cells[1].verdict, CellVerdict::ReproducedMissing);
        assert_eq!(diff.overall, DiffOverall::DifferentResults);
    }

    fn arb_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-c]{0,3}",
                Just(" ".to_string()),
                Just("\n".to_string()),
                Just("\r\n".to_string()),
                Just("\r".to_string()),
                Just("\t".to_string()),
                Just("\u{1b}[1;31m".to_string()),
                Just("\u{1b}".to_string()),
                Just("[0m".to_string()),
            ],
            0..8,
        )
        .prop_map(|p| p.concat())
    }

    fn arb_output() -> impl Strategy<Value = Output> {
        prop_oneof![
            (any::<bool>(), arb_text()).prop_map(|(e, t)| Output::stream(
                if e { StreamName::Stderr } else { StreamName::Stdout },
                t
            )),
            (arb_text(), prop::option::of(1u32..9)).prop_map(|(t, c)| Output::text_result(t, c)),
            ("[A-Z][a-z]{0,4}", arb_text()).prop_map(|(n, v)| Output::error(n, v)),
        ]
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(list in prop::collection::vec(arb_output(), 0..8)) {
            let once = normalize_outputs(&list);
            prop_assert_eq!(canonicalize(once.clone()), once);
        }

        #[test]
        fn diff_is_reflexive(list in prop::collection::vec(arb_output(), 0..8)) {
            prop_assert_eq!(diff_cell(&list, &list, 0).verdict, CellVerdict::Same);
        }
    }
}
