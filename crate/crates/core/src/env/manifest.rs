//! Package names out of dependency manifests.

/// Normalized project name (`Foo_Bar` -> `foo-bar`) as pip compares them.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_sep = false;
    for c in name.chars() {
        if matches!(c, '-' | '_' | '.') {
            if !last_sep {
                out.push('-');
            }
            last_sep = true;
        } else {
            out.push(c.to_ascii_lowercase());
            last_sep = false;
        }
    }
    out
}

fn leading_name(spec: &str) -> Option<String> {
    let name: String = spec
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        .collect();
    (!name.is_empty()).then(|| normalize_name(&name))
}

/// Requirement names from a `requirements.txt` body. Options (`-r`, `-e`,
/// `--index-url`, ...), URLs and comments are skipped.
pub fn requirement_names(text: &str) -> Vec<String> {
    let mut names = Vec::new();
    let joined = text.replace("\\\n", " ");
    for line in joined.lines() {
        let line = match line.find(" #").or_else(|| line.trim_start().starts_with('#').then_some(0)) {
            Some(i) => &line[..i],
            None => line,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('-') || line.contains("://") {
            continue;
        }
        if let Some(name) = leading_name(line) {
            names.push(name);
        }
    }
    names
}

/// `(name, pip requirement)` pairs from the `[packages]` table of a Pipfile.
pub fn pipfile_requirements(text: &str) -> Result<Vec<(String, String)>, String> {
    let doc: toml::Table = text.parse().map_err(|e| format!("invalid Pipfile: {e}"))?;
    let Some(packages) = doc.get("packages").and_then(|p| p.as_table()) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (name, spec) in packages {
        let version = match spec {
            toml::Value::String(v) => Some(v.clone()),
            toml::Value::Table(t) => t.get("version").and_then(|v| v.as_str()).map(str::to_string),
            _ => None,
        };
        let requirement = match version.as_deref() {
            None | Some("*") | Some("") => name.clone(),
            Some(v) => format!("{name}{v}"),
        };
        out.push((normalize_name(name), requirement));
    }
    out.sort();
    Ok(out)
}
