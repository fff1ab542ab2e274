//! Reproducibility jobs for notebook repositories: a durable job store, a
//! worker pool, the HTTP/JSON API and the report document.
//!
//! A job fetches a repository, re-executes its notebooks and writes
//! `report.json`, `run.json` and provenance Turtle files into
//! `<workdir>/jobs/<job_id>/`.

pub mod api;
pub mod binder;
pub mod job;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod store;

pub use binder::{binder_link, BinderError};
pub use job::{Job, JobState};
pub use pipeline::{Formats, KernelBackend, Pipeline, PipelineConfig, ProvisionerBackend, RUN_FILE};
pub use report::{build_report, ReportDocument, SCHEMA_VERSION};
pub use service::{Service, ServiceConfig, ServiceError, DEFAULT_WORKERS};
pub use store::{JobStore, StoreError};
