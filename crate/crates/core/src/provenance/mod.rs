//! RDF export of prospective (plan) and retrospective (run) provenance.

mod export;
mod graph;
mod turtle;

pub use export::{
    env_iri, export_prospective, export_repository, export_retrospective, mint_iri, repo_iri,
    INLINE_OUTPUT_LIMIT,
};
pub use graph::{
    is_absolute_iri, Literal, ProvenanceGraph, Term, Triple, PROV, RDF, RDF_TYPE, RL, XSD,
    XSD_DATETIME, XSD_INTEGER, XSD_STRING,
};
pub use turtle::serialize_turtle;
