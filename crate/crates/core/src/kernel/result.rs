use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::notebook::Output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    Error,
    Timeout,
    Aborted,
}

/// What one `execute_request` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellExecutionResult {
    pub status: ExecutionStatus,
    pub outputs: Vec<Output>,
    pub execution_count: Option<u32>,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    /// Always `ended_at - started_at` in milliseconds.
    pub duration_ms: i64,
    /// Number of stdin `input_request`s answered with an empty reply.
    #[serde(default)]
    pub stdin_requests: u32,
}

impl CellExecutionResult {
    pub fn new(
        status: ExecutionStatus,
        outputs: Vec<Output>,
        execution_count: Option<u32>,
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
    ) -> Self {
        Self {
            status,
            outputs,
            execution_count,
            started_at,
            ended_at,
            duration_ms: (ended_at - started_at).num_milliseconds(),
            stdin_requests: 0,
        }
    }

    /// The final output when it is an error, as `(ename, evalue)`.
    pub fn final_error(&self) -> Option<(&str, &str)> {
        match self.outputs.last() {
            Some(Output::Error { ename, evalue, .. }) => Some((ename, evalue)),
            _ => None,
        }
    }
}
