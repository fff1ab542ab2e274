//! Typed model of nbformat 4 notebook documents.
//!
//! Parsing is strict about the parts of the document the pipeline relies on
//! (format version, cell kinds, output shapes) and lossless about the rest:
//! notebook, cell and output metadata are kept verbatim as opaque JSON maps so
//! that [`serialize_notebook`] can write them back unchanged.

mod parse;
mod serialize;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use parse::parse_notebook;
pub(crate) use parse::output_from_message;
pub use serialize::{serialize_notebook, to_json_value};
pub use validate::{validate, ValidityReport, MAX_KNOWN_MINOR};

/// Errors raised while parsing a notebook document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum NotebookError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("unsupported nbformat {0}")]
    UnsupportedFormat(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpecInfo {
    pub name: String,
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

impl CellKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Code => "code",
            CellKind::Markdown => "markdown",
            CellKind::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamName {
    Stdout,
    Stderr,
}

impl StreamName {
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamName::Stdout => "stdout",
            StreamName::Stderr => "stderr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "stdout" => Some(StreamName::Stdout),
            "stderr" => Some(StreamName::Stderr),
            _ => None,
        }
    }
}

/// One entry of a MIME bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", content = "value", rename_all = "lowercase")]
pub enum MimePayload {
    Text(String),
    /// Base64 text as stored in the document (line breaks included).
    Base64(String),
    Json(Value),
}

pub type MimeBundle = BTreeMap<String, MimePayload>;

/// MIME types whose string payloads are base64-encoded binary data.
pub fn is_binary_mime(mime: &str) -> bool {
    (mime.starts_with("image/") && mime != "image/svg+xml")
        || mime.starts_with("audio/")
        || mime.starts_with("video/")
        || mime == "application/pdf"
        || mime == "application/octet-stream"
}

pub fn is_json_mime(mime: &str) -> bool {
    mime == "application/json" || mime.ends_with("+json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "output_type", rename_all = "snake_case")]
pub enum Output {
    Stream {
        name: StreamName,
        text: String,
    },
    ExecuteResult {
        data: MimeBundle,
        execution_count: Option<u32>,
        #[serde(default)]
        metadata: Map<String, Value>,
    },
    DisplayData {
        data: MimeBundle,
        #[serde(default)]
        metadata: Map<String, Value>,
    },
    Error {
        ename: String,
        evalue: String,
        traceback: Vec<String>,
    },
}

impl Output {
    pub fn stream(name: StreamName, text: impl Into<String>) -> Self {
        Output::Stream {
            name,
            text: text.into(),
        }
    }

    pub fn text_result(text: impl Into<String>, execution_count: Option<u32>) -> Self {
        let mut data = MimeBundle::new();
        data.insert("text/plain".into(), MimePayload::Text(text.into()));
        Output::ExecuteResult {
            data,
            execution_count,
            metadata: Map::new(),
        }
    }

    pub fn error(ename: impl Into<String>, evalue: impl Into<String>) -> Self {
        Output::Error {
            ename: ename.into(),
            evalue: evalue.into(),
            traceback: Vec::new(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Output::Stream { .. } => "stream",
            Output::ExecuteResult { .. } => "execute_result",
            Output::DisplayData { .. } => "display_data",
            Output::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
    pub execution_count: Option<u32>,
    pub outputs: Vec<Output>,
    /// The format's optional cell id; preserved, never used for alignment.
    pub id: Option<String>,
    pub metadata: Map<String, Value>,
    /// Keys other than the ones modelled above (e.g. `attachments`).
    pub extra: Map<String, Value>,
}

impl Cell {
    pub fn code(index: usize, source: impl Into<String>) -> Self {
        Cell {
            index,
            kind: CellKind::Code,
            source: source.into(),
            execution_count: None,
            outputs: Vec::new(),
            id: None,
            metadata: Map::new(),
            extra: Map::new(),
        }
    }

    pub fn markdown(index: usize, source: impl Into<String>) -> Self {
        Cell {
            kind: CellKind::Markdown,
            ..Cell::code(index, source)
        }
    }

    pub fn is_code(&self) -> bool {
        self.kind == CellKind::Code
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notebook {
    pub format_major: u32,
    pub format_minor: u32,
    pub kernel_spec: Option<KernelSpecInfo>,
    pub language_name: Option<String>,
    pub language_version: Option<String>,
    pub cells: Vec<Cell>,
    pub source_path: String,
    /// Complete notebook-level metadata object as found in the document.
    pub metadata: Map<String, Value>,
    /// Unknown top-level keys.
    pub extra: Map<String, Value>,
}

impl Notebook {
    /// An empty nbformat 4.5 notebook.
    pub fn empty(source_path: impl Into<String>) -> Self {
        Notebook {
            format_major: 4,
            format_minor: 5,
            kernel_spec: None,
            language_name: None,
            language_version: None,
            cells: Vec::new(),
            source_path: source_path.into(),
            metadata: Map::new(),
            extra: Map::new(),
        }
    }

    pub fn code_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.is_code())
    }

    /// Kernel language: `language_info.name`, falling back to the kernelspec
    /// name stripped of trailing digits (`python3` -> `python`).
    pub fn language(&self) -> Option<String> {
        if let Some(name) = &self.language_name {
            return Some(name.to_ascii_lowercase());
        }
        self.metadata
            .get("kernelspec")
            .and_then(|k| k.get("language"))
            .and_then(Value::as_str)
            .map(str::to_ascii_lowercase)
            .or_else(|| {
                self.kernel_spec.as_ref().map(|k| {
                    k.name
                        .trim_end_matches(|c: char| c.is_ascii_digit())
                        .to_ascii_lowercase()
                })
            })
    }
}
