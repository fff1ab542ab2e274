//! Drives repository jobs: environment, kernel, cell-by-cell execution.

mod record;
mod run;

pub use record::{
    CellRecord, FidelityFlag, NotExecutedReason, NotebookEntry, NotebookRunRecord, ParsedNotebook,
    RepoRunReport, TerminalStatus,
};
pub use run::{
    Orchestrator, OrchestratorConfig, ProgressEvent, ProgressSink, DEFAULT_CELL_TIMEOUT, DEFAULT_NOTEBOOK_TIMEOUT,
    SUPPORTED_LANGUAGES,
};
