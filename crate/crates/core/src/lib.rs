//! Reproducibility analysis for repositories of computational notebooks.
//!
//! The pipeline fetches a repository snapshot ([`ingest`]), parses every
//! notebook ([`notebook`]), provisions an environment per notebook
//! ([`env`]), re-executes the code cells through a kernel ([`kernel`],
//! [`orchestrator`]), compares reproduced outputs with the stored ones
//! ([`diff`]), classifies and aggregates the outcomes ([`analytics`]) and
//! exports execution provenance as RDF Turtle ([`provenance`]).

pub mod analytics;
pub mod diff;
pub mod env;
pub mod ingest;
pub mod kernel;
pub mod notebook;
pub mod orchestrator;
pub mod provenance;
pub mod version;

pub use notebook::{Cell, CellKind, KernelSpecInfo, Notebook, Output, ValidityReport};
pub use version::LanguageVersion;
