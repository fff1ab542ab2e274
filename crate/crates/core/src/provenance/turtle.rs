//! Turtle 1.1 writer.

use std::fmt::Write as _;

use super::graph::{ProvenanceGraph, Term, RDF_TYPE, XSD_STRING};

fn is_simple_local(local: &str) -> bool {
    let mut chars = local.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

// Graph IRIs never contain characters that would need escaping here.
fn write_iri_ref(out: &mut String, iri: &str) {
    out.push('<');
    out.push_str(iri);
    out.push('>');
}

struct Prefixes<'a> {
    // Longest namespace first so the most specific prefix wins.
    entries: Vec<(&'a str, &'a str)>,
}

impl<'a> Prefixes<'a> {
    fn new(graph: &'a ProvenanceGraph) -> Self {
        let mut entries: Vec<(&str, &str)> = graph
            .namespaces()
            .iter()
            .map(|(p, i)| (p.as_str(), i.as_str()))
            .collect();
        entries.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
        Prefixes { entries }
    }

    fn write_iri(&self, out: &mut String, iri: &str) {
        for (prefix, ns) in &self.entries {
            if let Some(local) = iri.strip_prefix(ns) {
                if is_simple_local(local) {
                    let _ = write!(out, "{prefix}:{local}");
                    return;
                }
            }
        }
        write_iri_ref(out, iri);
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_term(out: &mut String, prefixes: &Prefixes<'_>, term: &Term) {
    match term {
        Term::Iri(iri) => prefixes.write_iri(out, iri),
        Term::Literal(lit) => {
            write_string(out, &lit.lexical);
            if lit.datatype != XSD_STRING {
                out.push_str("^^");
                prefixes.write_iri(out, &lit.datatype);
            }
        }
    }
}

/// Serializes the graph: prefix declarations, then one block per subject with
/// predicates grouped by `;` and repeated objects by `,`.
pub fn serialize_turtle(graph: &ProvenanceGraph) -> String {
    let prefixes = Prefixes::new(graph);
    let mut out = String::new();
    for (prefix, ns) in graph.namespaces() {
        let _ = write!(out, "@prefix {prefix}: ");
        write_iri_ref(&mut out, ns);
        out.push_str(" .\n");
    }

    let mut current_subject: Option<&str> = None;
    let mut current_predicate: Option<&str> = None;
    for triple in graph.triples() {
        if current_subject != Some(triple.subject.as_str()) {
            if current_subject.is_some() {
                out.push_str(" .\n");
            }
            out.push('\n');
            prefixes.write_iri(&mut out, &triple.subject);
            out.push_str("\n    ");
            current_subject = Some(&triple.subject);
            current_predicate = None;
        }
        if current_predicate == Some(triple.predicate.as_str()) {
            out.push_str(" ,\n        ");
        } else {
            if current_predicate.is_some() {
                out.push_str(" ;\n    ");
            }
            if triple.predicate == RDF_TYPE {
                out.push('a');
            } else {
                prefixes.write_iri(&mut out, &triple.predicate);
            }
            out.push(' ');
            current_predicate = Some(&triple.predicate);
        }
        write_term(&mut out, &prefixes, &triple.object);
    }
    if current_subject.is_some() {
        out.push_str(" .\n");
    }
    out
}
