use serde_json::{Map, Value};

use super::{
    is_binary_mime, is_json_mime, Cell, CellKind, KernelSpecInfo, MimeBundle, MimePayload,
    Notebook, NotebookError, Output, StreamName,
};

type Result<T> = std::result::Result<T, NotebookError>;

fn violation(msg: impl Into<String>) -> NotebookError {
    NotebookError::SchemaViolation(msg.into())
}

/// Parses an nbformat 4 document. `path` is recorded as the notebook's
/// repository-relative source path.
pub fn parse_notebook(raw: &[u8], path: &str) -> Result<Notebook> {
    let root: Value =
        serde_json::from_slice(raw).map_err(|e| NotebookError::MalformedJson(e.to_string()))?;
    let Value::Object(mut root) = root else {
        return Err(violation("document root is not an object"));
    };

    let format_major = match root.remove("nbformat") {
        None => return Err(NotebookError::UnsupportedFormat("missing".into())),
        Some(Value::Number(n)) if n.as_u64() == Some(4) => 4,
        Some(other) => return Err(NotebookError::UnsupportedFormat(other.to_string())),
    };
    let format_minor = match root.remove("nbformat_minor") {
        Some(Value::Number(n)) => n
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| violation("nbformat_minor is not a non-negative integer"))?,
        Some(_) => return Err(violation("nbformat_minor is not an integer")),
        None => return Err(violation("missing nbformat_minor")),
    };
    let metadata = match root.remove("metadata") {
        None => Map::new(),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(violation("metadata is not an object")),
    };
    let cells = match root.remove("cells") {
        Some(Value::Array(cells)) => cells,
        Some(_) => return Err(violation("cells is not a list")),
        None => return Err(violation("missing cells")),
    };
    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(index, cell)| parse_cell(index, cell))
        .collect::<Result<Vec<_>>>()?;

    let kernel_spec = metadata
        .get("kernelspec")
        .and_then(Value::as_object)
        .and_then(|k| {
            let name = k.get("name").and_then(Value::as_str)?;
            if name.is_empty() {
                return None;
            }
            Some(KernelSpecInfo {
                name: name.to_string(),
                display_name: k
                    .get("display_name")
                    .and_then(Value::as_str)
                    .map(str::to_string),
            })
        });
    let language_info = metadata.get("language_info").and_then(Value::as_object);
    let language_name = language_info
        .and_then(|l| l.get("name"))
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let language_version = language_info
        .and_then(|l| l.get("version"))
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string);

    Ok(Notebook {
        format_major,
        format_minor,
        kernel_spec,
        language_name,
        language_version,
        cells,
        source_path: path.to_string(),
        metadata,
        extra: root,
    })
}

/// Joins the format's "multiline string" (a string or a list of strings).
pub(super) fn multiline(value: Value, what: &str) -> Result<String> {
    match value {
        Value::String(s) => Ok(s),
        Value::Array(parts) => parts
            .into_iter()
            .map(|p| match p {
                Value::String(s) => Ok(s),
                _ => Err(violation(format!("{what} contains a non-string line"))),
            })
            .collect(),
        _ => Err(violation(format!("{what} is not a string or list of strings"))),
    }
}

fn parse_execution_count(value: Option<Value>, what: &str) -> Result<Option<u32>> {
    match value {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => match n.as_u64().and_then(|v| u32::try_from(v).ok()) {
            Some(v) if v >= 1 => Ok(Some(v)),
            _ => Err(violation(format!("{what} execution_count must be >= 1"))),
        },
        Some(_) => Err(violation(format!("{what} execution_count is not an integer"))),
    }
}

fn object_or_empty(value: Option<Value>, what: &str) -> Result<Map<String, Value>> {
    match value {
        None => Ok(Map::new()),
        Some(Value::Object(m)) => Ok(m),
        Some(_) => Err(violation(format!("{what} is not an object"))),
    }
}

fn parse_cell(index: usize, value: Value) -> Result<Cell> {
    let Value::Object(mut obj) = value else {
        return Err(violation(format!("cell {index} is not an object")));
    };
    let kind = match obj.remove("cell_type") {
        Some(Value::String(t)) => match t.as_str() {
            "code" => CellKind::Code,
            "markdown" => CellKind::Markdown,
            "raw" => CellKind::Raw,
            other => return Err(violation(format!("cell {index} has unknown type {other:?}"))),
        },
        _ => return Err(violation(format!("cell {index} is missing cell_type"))),
    };
    let source = match obj.remove("source") {
        Some(v) => multiline(v, &format!("cell {index} source"))?,
        None => return Err(violation(format!("cell {index} is missing source"))),
    };
    let metadata = object_or_empty(obj.remove("metadata"), &format!("cell {index} metadata"))?;
    let id = match obj.remove("id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(violation(format!("cell {index} id is not a string"))),
    };

    let (execution_count, outputs) = match kind {
        CellKind::Code => {
            let count = parse_execution_count(obj.remove("execution_count"), "cell")?;
            let outputs = match obj.remove("outputs") {
                Some(Value::Array(list)) => list
                    .into_iter()
                    .map(|o| parse_output(index, o))
                    .collect::<Result<Vec<_>>>()?,
                Some(_) => return Err(violation(format!("cell {index} outputs is not a list"))),
                None => return Err(violation(format!("code cell {index} is missing outputs"))),
            };
            (count, outputs)
        }
        CellKind::Markdown | CellKind::Raw => {
            if let Some(outputs) = obj.remove("outputs") {
                if outputs.as_array().is_some_and(|a| !a.is_empty()) {
                    return Err(violation(format!(
                        "{} cell {index} carries outputs",
                        kind.as_str()
                    )));
                }
            }
            if let Some(count) = obj.remove("execution_count") {
                if !count.is_null() {
                    return Err(violation(format!(
                        "{} cell {index} carries an execution_count",
                        kind.as_str()
                    )));
                }
            }
            (None, Vec::new())
        }
    };

    Ok(Cell {
        index,
        kind,
        source,
        execution_count,
        outputs,
        id,
        metadata,
        extra: obj,
    })
}

fn parse_bundle(cell: usize, value: Option<Value>) -> Result<MimeBundle> {
    let Some(Value::Object(map)) = value else {
        return Err(violation(format!("cell {cell} output data is not an object")));
    };
    if map.is_empty() {
        return Err(violation(format!("cell {cell} output has an empty MIME bundle")));
    }
    let mut bundle = MimeBundle::new();
    for (mime, payload) in map {
        let payload = if is_json_mime(&mime) {
            MimePayload::Json(payload)
        } else {
            let text = multiline(payload, &format!("cell {cell} payload {mime}"))?;
            if is_binary_mime(&mime) {
                MimePayload::Base64(text)
            } else {
                MimePayload::Text(text)
            }
        };
        bundle.insert(mime, payload);
    }
    Ok(bundle)
}

fn parse_output(cell: usize, value: Value) -> Result<Output> {
    let Value::Object(mut obj) = value else {
        return Err(violation(format!("cell {cell} output is not an object")));
    };
    let output_type = match obj.remove("output_type") {
        Some(Value::String(s)) => s,
        _ => return Err(violation(format!("cell {cell} output is missing output_type"))),
    };
    match output_type.as_str() {
        "stream" => {
            let name = obj
                .remove("name")
                .and_then(|v| v.as_str().and_then(StreamName::from_name))
                .ok_or_else(|| violation(format!("cell {cell} stream has no valid name")))?;
            let text = match obj.remove("text") {
                Some(v) => multiline(v, &format!("cell {cell} stream text"))?,
                None => return Err(violation(format!("cell {cell} stream is missing text"))),
            };
            Ok(Output::Stream { name, text })
        }
        "execute_result" => Ok(Output::ExecuteResult {
            data: parse_bundle(cell, obj.remove("data"))?,
            execution_count: parse_execution_count(obj.remove("execution_count"), "output")?,
            metadata: object_or_empty(obj.remove("metadata"), "output metadata")?,
        }),
        "display_data" => Ok(Output::DisplayData {
            data: parse_bundle(cell, obj.remove("data"))?,
            metadata: object_or_empty(obj.remove("metadata"), "output metadata")?,
        }),
        "error" => {
            let ename = match obj.remove("ename") {
                Some(Value::String(s)) if !s.is_empty() => s,
                _ => return Err(violation(format!("cell {cell} error output has no ename"))),
            };
            let evalue = match obj.remove("evalue") {
                Some(Value::String(s)) => s,
                None | Some(Value::Null) => String::new(),
                Some(_) => return Err(violation(format!("cell {cell} evalue is not a string"))),
            };
            let traceback = match obj.remove("traceback") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(lines)) => lines
                    .into_iter()
                    .map(|l| match l {
                        Value::String(s) => Ok(s),
                        _ => Err(violation(format!("cell {cell} traceback line is not a string"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
                Some(_) => return Err(violation(format!("cell {cell} traceback is not a list"))),
            };
            Ok(Output::Error {
                ename,
                evalue,
                traceback,
            })
        }
        other => Err(violation(format!("cell {cell} has unknown output_type {other:?}"))),
    }
}

/// Converts the content of an iopub `stream`, `execute_result`,
/// `display_data` or `error` message into an output.
pub(crate) fn output_from_message(msg_type: &str, content: &Value) -> Result<Output> {
    let mut obj = match content {
        Value::Object(m) => m.clone(),
        _ => return Err(violation(format!("{msg_type} content is not an object"))),
    };
    obj.insert("output_type".into(), Value::String(msg_type.to_string()));
    parse_output(0, Value::Object(obj))
}
