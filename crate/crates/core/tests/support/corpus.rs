//! The valid notebooks under `fixtures/` and a structural round-trip check.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::Value;

use repro_lens_core::notebook::{parse_notebook, serialize_notebook};

/// Every `.ipynb` under `fixtures/` except the nbformat 3 one.
pub fn valid_notebooks() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut files: Vec<PathBuf> = walk(&root)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "ipynb"))
        .filter(|p| !p.ends_with("legacy_v3.ipynb"))
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

/// Multiline strings may be stored as one string or a list of lines.
pub fn joined(value: Value) -> Value {
    match value {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| {
                    let multiline = k == "source" || k == "text" || (k.contains('/') && !k.ends_with("json"));
                    let v = match v {
                        Value::Array(items) if multiline && items.iter().all(Value::is_string) => {
                            Value::String(items.iter().filter_map(Value::as_str).collect())
                        }
                        other => joined(other),
                    };
                    (k, v)
                })
                .collect(),
        ),
        Value::Array(items) => Value::Array(items.into_iter().map(joined).collect()),
        other => other,
    }
}

/// Parses, serializes and parses again. The typed model must not change,
/// and the written JSON must carry the same document as the file, up to
/// the list-or-string choice for multiline text.
pub fn round_trip(path: &Path) -> Result<(), String> {
    let raw = std::fs::read(path).map_err(|e| e.to_string())?;
    let name = path.file_name().unwrap().to_string_lossy().to_string();
    let nb = parse_notebook(&raw, &name).map_err(|e| format!("{name}: {e}"))?;
    let written = serialize_notebook(&nb);
    let again = parse_notebook(&written, &name).map_err(|e| format!("{name}: reparse: {e}"))?;
    if again != nb {
        return Err(format!("{name}: typed model changed"));
    }
    let original = joined(serde_json::from_slice(&raw).unwrap());
    let rewritten = joined(serde_json::from_slice(&written).unwrap());
    if original != rewritten {
        return Err(format!("{name}: JSON document changed"));
    }
    Ok(())
}
