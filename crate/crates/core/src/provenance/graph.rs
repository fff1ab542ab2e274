use std::collections::{BTreeMap, BTreeSet};

pub const PROV: &str = "http://www.w3.org/ns/prov#";
pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
/// Notebook-specific terms (cell index, kernel, outputs, ...).
pub const RL: &str = "urn:repro-lens:vocab:";

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DATETIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub lexical: String,
    /// Datatype IRI; `xsd:string` for plain literals.
    pub datatype: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Literal(Literal),
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Self {
        Term::Iri(iri.into())
    }

    pub fn string(lexical: impl Into<String>) -> Self {
        Term::typed(lexical, XSD_STRING)
    }

    pub fn integer(value: i64) -> Self {
        Term::typed(value.to_string(), XSD_INTEGER)
    }

    pub fn typed(lexical: impl Into<String>, datatype: &str) -> Self {
        Term::Literal(Literal {
            lexical: lexical.into(),
            datatype: datatype.to_string(),
        })
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(i) => Some(i),
            Term::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(l) => Some(l),
            Term::Iri(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

/// True for absolute IRIs per RFC 3987, the only ones a graph accepts.
pub fn is_absolute_iri(iri: &str) -> bool {
    oxiri::Iri::parse(iri).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceGraph {
    triples: BTreeSet<Triple>,
    namespaces: BTreeMap<String, String>,
}

impl Default for ProvenanceGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl ProvenanceGraph {
    /// Empty graph with the `prov`, `rdf`, `xsd` and `rl` prefixes declared.
    pub fn new() -> Self {
        let namespaces = [("prov", PROV), ("rdf", RDF), ("xsd", XSD), ("rl", RL)]
            .into_iter()
            .map(|(p, i)| (p.to_string(), i.to_string()))
            .collect();
        ProvenanceGraph {
            triples: BTreeSet::new(),
            namespaces,
        }
    }

    /// Adds a triple. Panics on relative IRIs, which would make the graph
    /// unserializable.
    pub fn add(&mut self, subject: impl Into<String>, predicate: impl Into<String>, object: Term) {
        let subject = subject.into();
        let predicate = predicate.into();
        assert!(is_absolute_iri(&subject), "relative subject IRI {subject:?}");
        assert!(is_absolute_iri(&predicate), "relative predicate IRI {predicate:?}");
        if let Term::Iri(o) = &object {
            assert!(is_absolute_iri(o), "relative object IRI {o:?}");
        }
        self.triples.insert(Triple {
            subject,
            predicate,
            object,
        });
    }

    pub fn add_type(&mut self, subject: &str, class: &str) {
        self.add(subject, RDF_TYPE, Term::iri(class));
    }

    pub fn extend(&mut self, other: &ProvenanceGraph) {
        self.triples.extend(other.triples.iter().cloned());
        for (p, i) in &other.namespaces {
            self.namespaces.entry(p.clone()).or_insert_with(|| i.clone());
        }
    }

    pub fn bind_prefix(&mut self, prefix: &str, iri: &str) {
        self.namespaces.insert(prefix.to_string(), iri.to_string());
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn namespaces(&self) -> &BTreeMap<String, String> {
        &self.namespaces
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Subjects declared with `rdf:type class`.
    pub fn instances_of(&self, class: &str) -> BTreeSet<&str> {
        self.triples
            .iter()
            .filter(|t| t.predicate == RDF_TYPE && t.object.as_iri() == Some(class))
            .map(|t| t.subject.as_str())
            .collect()
    }

    pub fn objects(&self, subject: &str, predicate: &str) -> Vec<&Term> {
        self.triples
            .iter()
            .filter(|t| t.subject == subject && t.predicate == predicate)
            .map(|t| &t.object)
            .collect()
    }
}
