use serde::Serialize;
use serde_json::{Map, Value};

use super::{Cell, CellKind, MimeBundle, MimePayload, Notebook, Output};

/// Splits text into the on-disk list-of-lines form, keeping line endings.
fn lines(text: &str) -> Value {
    Value::Array(
        text.split_inclusive('\n')
            .map(|l| Value::String(l.to_string()))
            .collect(),
    )
}

fn bundle(data: &MimeBundle) -> Value {
    let mut out = Map::new();
    for (mime, payload) in data {
        let value = match payload {
            MimePayload::Text(t) => lines(t),
            MimePayload::Base64(b) => Value::String(b.clone()),
            MimePayload::Json(v) => v.clone(),
        };
        out.insert(mime.clone(), value);
    }
    Value::Object(out)
}

fn count(c: Option<u32>) -> Value {
    c.map_or(Value::Null, Value::from)
}

fn output(o: &Output) -> Value {
    let mut obj = Map::new();
    obj.insert("output_type".into(), o.type_name().into());
    match o {
        Output::Stream { name, text } => {
            obj.insert("name".into(), name.as_str().into());
            obj.insert("text".into(), lines(text));
        }
        Output::ExecuteResult {
            data,
            execution_count,
            metadata,
        } => {
            obj.insert("data".into(), bundle(data));
            obj.insert("execution_count".into(), count(*execution_count));
            obj.insert("metadata".into(), Value::Object(metadata.clone()));
        }
        Output::DisplayData { data, metadata } => {
            obj.insert("data".into(), bundle(data));
            obj.insert("metadata".into(), Value::Object(metadata.clone()));
        }
        Output::Error {
            ename,
            evalue,
            traceback,
        } => {
            obj.insert("ename".into(), ename.as_str().into());
            obj.insert("evalue".into(), evalue.as_str().into());
            obj.insert("traceback".into(), traceback.clone().into());
        }
    }
    Value::Object(obj)
}

fn cell(c: &Cell) -> Value {
    let mut obj = c.extra.clone();
    obj.insert("cell_type".into(), c.kind.as_str().into());
    obj.insert("metadata".into(), Value::Object(c.metadata.clone()));
    obj.insert("source".into(), lines(&c.source));
    if let Some(id) = &c.id {
        obj.insert("id".into(), id.as_str().into());
    }
    if c.kind == CellKind::Code {
        obj.insert("execution_count".into(), count(c.execution_count));
        obj.insert(
            "outputs".into(),
            Value::Array(c.outputs.iter().map(output).collect()),
        );
    }
    Value::Object(obj)
}

/// Builds the nbformat JSON tree. Typed kernel/language fields override the
/// corresponding entries of the preserved metadata map.
pub fn to_json_value(nb: &Notebook) -> Value {
    let mut metadata = nb.metadata.clone();
    if let Some(spec) = &nb.kernel_spec {
        let entry = metadata
            .entry("kernelspec")
            .or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        let ks = entry.as_object_mut().expect("object");
        ks.insert("name".into(), spec.name.as_str().into());
        if let Some(display) = &spec.display_name {
            ks.insert("display_name".into(), display.as_str().into());
        }
    }
    if nb.language_name.is_some() || nb.language_version.is_some() {
        let entry = metadata
            .entry("language_info")
            .or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        let li = entry.as_object_mut().expect("object");
        if let Some(name) = &nb.language_name {
            li.insert("name".into(), name.as_str().into());
        }
        if let Some(version) = &nb.language_version {
            li.insert("version".into(), version.as_str().into());
        }
    }

    let mut root = nb.extra.clone();
    root.insert("nbformat".into(), nb.format_major.into());
    root.insert("nbformat_minor".into(), nb.format_minor.into());
    root.insert("metadata".into(), Value::Object(metadata));
    root.insert(
        "cells".into(),
        Value::Array(nb.cells.iter().map(cell).collect()),
    );
    Value::Object(root)
}

/// Writes the notebook as nbformat 4 JSON with sorted keys and one-space
/// indentation, the layout notebook front-ends produce.
pub fn serialize_notebook(nb: &Notebook) -> Vec<u8> {
    let value = to_json_value(nb);
    let mut buf = Vec::new();
    let formatter = serde_json::ser::PrettyFormatter::with_indent(b" ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value
        .serialize(&mut ser)
        .expect("serializing a JSON value into memory cannot fail");
    buf.push(b'\n');
    buf
}
