//! Module listing for notebook code cells.
//!
//! A line scanner, not a parser: it recognizes `import a[.b] [as c], ...` and
//! `from a[.b] import ...` statements that begin a logical line (at any
//! indentation) or follow a `;`. String literals, comments, shell escapes
//! (`!cmd`) and magics (`%line`, `%%cell`) are masked out first.

use std::collections::BTreeSet;

use crate::notebook::Notebook;

pub fn extract_imports(nb: &Notebook) -> BTreeSet<String> {
    nb.code_cells()
        .flat_map(|c| imports_in_source(&c.source))
        .collect()
}

pub fn imports_in_source(source: &str) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    if source.trim_start().starts_with("%%") {
        return found;
    }
    for stmt in logical_statements(source) {
        parse_statement(&stmt, &mut found);
    }
    found
}

#[derive(Clone, Copy)]
enum Quote {
    Single(char),
    Triple(char),
}

/// Splits source into statements with string contents replaced by `""`.
fn logical_statements(source: &str) -> Vec<String> {
    let chars: Vec<char> = source.chars().collect();
    let mut statements = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    let mut quote: Option<Quote> = None;
    let mut at_line_start = true;
    let mut i = 0;

    let flush = |current: &mut String, statements: &mut Vec<String>| {
        if !current.trim().is_empty() {
            statements.push(std::mem::take(current));
        } else {
            current.clear();
        }
    };

    while i < chars.len() {
        let c = chars[i];
        if let Some(q) = quote {
            match q {
                _ if c == '\\' => i += 1,
                Quote::Single(_) if c == '\n' => {
                    // Unterminated single-line string.
                    quote = None;
                    current.push('"');
                    if depth == 0 {
                        flush(&mut current, &mut statements);
                    }
                    at_line_start = true;
                }
                Quote::Single(q) if c == q => {
                    quote = None;
                    current.push('"');
                }
                Quote::Triple(q)
                    if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) =>
                {
                    quote = None;
                    current.push('"');
                    i += 2;
                }
                _ => {}
            }
            i += 1;
            continue;
        }

        if at_line_start && depth == 0 && current.trim().is_empty() {
            let rest = &chars[i..];
            let first = rest.iter().position(|c| !matches!(c, ' ' | '\t'));
            if let Some(pos) = first {
                if matches!(rest[pos], '!' | '%') {
                    let skip = rest[pos..].iter().position(|c| *c == '\n').unwrap_or(rest.len() - pos);
                    i += pos + skip;
                    continue;
                }
            }
        }
        at_line_start = false;

        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '\'' | '"' => {
                if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                    quote = Some(Quote::Triple(c));
                    i += 2;
                } else {
                    quote = Some(Quote::Single(c));
                }
                current.push('"');
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => {
                current.push(' ');
                i += 1;
            }
            '(' | '[' | '{' => {
                depth += 1;
                current.push(c);
            }
            ')' | ']' | '}' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ';' if depth == 0 => flush(&mut current, &mut statements),
            '\n' => {
                if depth == 0 {
                    flush(&mut current, &mut statements);
                } else {
                    current.push(' ');
                }
                at_line_start = true;
            }
            _ => current.push(c),
        }
        i += 1;
    }
    flush(&mut current, &mut statements);
    statements
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric())
}

/// Top-level segment of an absolute dotted module path.
fn top_level(dotted: &str) -> Option<&str> {
    let mut segments = dotted.split('.');
    let first = segments.next()?;
    if !is_identifier(first) || !segments.all(is_identifier) {
        return None;
    }
    Some(first)
}

fn strip_keyword<'a>(s: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = s.strip_prefix(keyword)?;
    rest.starts_with([' ', '\t']).then_some(rest)
}

fn parse_statement(stmt: &str, found: &mut BTreeSet<String>) {
    let stmt = stmt.trim();
    if let Some(rest) = strip_keyword(stmt, "import") {
        let mut modules = Vec::new();
        for clause in rest.split(',') {
            let tokens: Vec<&str> = clause.split_whitespace().collect();
            let module = match tokens.as_slice() {
                [module] => module,
                [module, "as", alias] if is_identifier(alias) => module,
                _ => return,
            };
            match top_level(module) {
                Some(top) => modules.push(top),
                None => return,
            }
        }
        found.extend(modules.into_iter().map(String::from));
    } else if let Some(rest) = strip_keyword(stmt, "from") {
        let rest = rest.trim_start();
        let Some(end) = rest.find([' ', '\t']) else {
            return;
        };
        let (module, tail) = rest.split_at(end);
        let tail = tail.trim_start();
        let Some(names) = tail.strip_prefix("import") else {
            return;
        };
        if !(names.starts_with([' ', '\t', '(', '*'])) || names.trim().is_empty() {
            return;
        }
        if let Some(top) = top_level(module) {
            found.insert(top.to_string());
        }
    }
}
