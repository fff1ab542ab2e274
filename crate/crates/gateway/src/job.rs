use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Where a job is in its life. States only move forward; see
/// [`JobState::can_move_to`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Fetching,
    Provisioning,
    Executing { path: String },
    Completed,
    Failed { error: String },
}

impl JobState {
    fn rank(&self) -> u8 {
        match self {
            JobState::Queued => 0,
            JobState::Fetching => 1,
            JobState::Provisioning => 2,
            JobState::Executing { .. } => 3,
            JobState::Completed | JobState::Failed { .. } => 4,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.rank() == 4
    }

    /// Forward moves only. Executing may repeat with a new path; any
    /// non-terminal state may fail.
    pub fn can_move_to(&self, next: &JobState) -> bool {
        if self.is_terminal() {
            return false;
        }
        match next {
            JobState::Failed { .. } => true,
            JobState::Executing { .. } => self.rank() <= 3,
            _ => next.rank() > self.rank(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Fetching => "fetching",
            JobState::Provisioning => "provisioning",
            JobState::Executing { .. } => "executing",
            JobState::Completed => "completed",
            JobState::Failed { .. } => "failed",
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobState::Executing { path } => write!(f, "executing {path}"),
            JobState::Failed { error } => write!(f, "failed: {error}"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub url: String,
    #[serde(rename = "ref")]
    pub git_ref: Option<String>,
    pub state: JobState,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    /// Report document on disk, once the job completed.
    pub result: Option<String>,
}
