//! Output-list generators and a naive string oracle for diff verdicts.

#![allow(dead_code)]

use proptest::prelude::*;

use repro_lens_core::kernel::{CellExecutionResult, ExecutionStatus};
use repro_lens_core::notebook::{MimeBundle, MimePayload, StreamName};
use repro_lens_core::orchestrator::{CellRecord, NotExecutedReason, NotebookRunRecord, TerminalStatus};
use repro_lens_core::{Cell, Notebook, Output};

pub fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            4 => "[a-d0-9]{1,3}",
            1 => Just(" ".to_string()),
            1 => Just("\t".to_string()),
            2 => Just("\n".to_string()),
            1 => Just("\r\n".to_string()),
            1 => Just("\r".to_string()),
            1 => Just("\u{1b}[0m".to_string()),
            1 => Just("\u{1b}[1;32m".to_string()),
            1 => Just("\u{1b}[?25h".to_string()),
            1 => Just("\u{1b}".to_string()),
            1 => Just("[".to_string()),
        ],
        0..10,
    )
    .prop_map(|parts| parts.concat())
}

pub fn stream_name() -> impl Strategy<Value = StreamName> {
    prop_oneof![Just(StreamName::Stdout), Just(StreamName::Stderr)]
}

pub fn text_output() -> impl Strategy<Value = Output> {
    prop_oneof![
        3 => (stream_name(), text()).prop_map(|(n, t)| Output::stream(n, t)),
        1 => (text(), prop::option::of(1u32..50)).prop_map(|(t, c)| Output::text_result(t, c)),
    ]
}

pub fn bundle() -> impl Strategy<Value = MimeBundle> {
    prop::collection::btree_map(
        prop_oneof![
            Just("text/plain".to_string()),
            Just("text/html".to_string()),
            Just("image/png".to_string()),
            Just("application/json".to_string()),
        ],
        (text(), prop::collection::vec(any::<u8>(), 0..12), any::<i32>()),
        1..4,
    )
    .prop_map(|entries| {
        entries
            .into_iter()
            .map(|(mime, (t, bytes, n))| {
                let payload = match mime.as_str() {
                    "image/png" => {
                        use base64::Engine as _;
                        MimePayload::Base64(base64::engine::general_purpose::STANDARD.encode(bytes))
                    }
                    "application/json" => MimePayload::Json(serde_json::json!({"n": n, "t": t})),
                    _ => MimePayload::Text(t),
                };
                (mime, payload)
            })
            .collect::<MimeBundle>()
    })
}

pub fn any_output() -> impl Strategy<Value = Output> {
    prop_oneof![
        4 => text_output(),
        1 => (bundle(), prop::option::of(1u32..9)).prop_map(|(data, execution_count)| Output::ExecuteResult {
            data,
            execution_count,
            metadata: Default::default(),
        }),
        1 => bundle().prop_map(|data| Output::DisplayData { data, metadata: Default::default() }),
        1 => ("[A-Z][a-z]{0,6}Error", text(), prop::collection::vec(text(), 0..3))
            .prop_map(|(ename, evalue, traceback)| Output::Error { ename, evalue, traceback }),
    ]
}

/// CSI sequences and lone ESC characters removed.
pub fn oracle_strip(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '\u{1b}' {
            out.push(chars[i]);
            i += 1;
            continue;
        }
        i += 1;
        if chars.get(i) != Some(&'[') {
            continue;
        }
        i += 1;
        while i < chars.len() && ('0'..='?').contains(&chars[i]) {
            i += 1;
        }
        while i < chars.len() && (' '..='/').contains(&chars[i]) {
            i += 1;
        }
        if i < chars.len() && ('@'..='~').contains(&chars[i]) {
            i += 1;
        }
    }
    out
}

pub fn oracle_newlines(text: &str) -> String {
    let mut out = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\r' {
            if chars.peek() == Some(&'\n') {
                chars.next();
            }
            out.push('\n');
        } else {
            out.push(c);
        }
    }
    out
}

pub fn oracle_trim_lines(text: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    for line in text.split('\n') {
        lines.push(line.trim_end_matches([' ', '\t']).to_string());
    }
    lines.join("\n")
}

/// One flat string per text-only output list.
pub fn naive_string(list: &[Output]) -> String {
    let mut segments: Vec<(Option<StreamName>, String)> = Vec::new();
    for out in list {
        match out {
            Output::Stream { name, text } => match segments.last_mut() {
                Some((Some(prev), buf)) if prev == name => buf.push_str(text),
                _ => segments.push((Some(*name), text.clone())),
            },
            Output::ExecuteResult { data, .. } => match data.get("text/plain") {
                Some(MimePayload::Text(t)) => segments.push((None, t.clone())),
                _ => unreachable!("generator only builds text/plain results"),
            },
            _ => unreachable!("generator only builds text outputs"),
        }
    }
    segments
        .into_iter()
        .map(|(name, body)| match name {
            Some(n) => format!("S{}\u{1}{}", n.as_str(), oracle_trim_lines(&oracle_newlines(&oracle_strip(&body)))),
            None => format!("R\u{1}{}", oracle_newlines(&body)),
        })
        .collect::<Vec<_>>()
        .join("\u{0}")
}

pub fn notebook(stored: &[Vec<Output>]) -> Notebook {
    let mut nb = Notebook::empty("gen.ipynb");
    for (i, outputs) in stored.iter().enumerate() {
        if i % 2 == 1 {
            nb.cells.push(Cell::markdown(nb.cells.len(), "between"));
        }
        nb.cells.push(Cell {
            outputs: outputs.clone(),
            execution_count: Some(i as u32 + 1),
            ..Cell::code(nb.cells.len(), "x")
        });
    }
    nb
}

pub fn completed(nb: &Notebook, reproduced: &[Vec<Output>]) -> NotebookRunRecord {
    let mut rec = NotebookRunRecord::not_executed(&nb.source_path, NotExecutedReason::ParseError(String::new()));
    rec.terminal_status = TerminalStatus::Completed;
    rec.cell_records = nb
        .code_cells()
        .zip(reproduced)
        .map(|(c, outs)| CellRecord {
            index: c.index,
            result: CellExecutionResult::new(ExecutionStatus::Ok, outs.clone(), None, rec.started_at, rec.ended_at),
        })
        .collect();
    rec
}
