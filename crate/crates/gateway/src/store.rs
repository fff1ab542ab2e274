//! Durable job store: one append-only journal per job.
//!
//! `<workdir>/jobs/<job_id>/journal.jsonl` holds one JSON object per line.
//! The first line records the submission, every later line one state
//! transition. Appends are flushed to disk before the in-memory state moves,
//! so a reader never sees a state the journal does not hold. On open, a torn
//! or unreadable tail (from a crash mid-append) is cut off and the journal
//! rewritten from its last good line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::job::{Job, JobState};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("job {0} not found")]
    NotFound(String),
    #[error("job {id} cannot move from {from} to {to}")]
    InvalidTransition { id: String, from: String, to: String },
    #[error("job store i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Submitted {
        url: String,
        #[serde(rename = "ref")]
        git_ref: Option<String>,
    },
    State {
        state: JobState,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Line {
    seq: u64,
    at: DateTime<Utc>,
    #[serde(flatten)]
    event: Event,
}

impl Line {
    fn encode(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("journal lines serialize");
        bytes.push(b'\n');
        bytes
    }
}

/// What opening the store found on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    pub loaded: usize,
    /// Jobs whose journal tail was cut off.
    pub repaired: Vec<String>,
    /// Job directories without a readable submission line; left untouched.
    pub skipped: Vec<String>,
}

struct Entry {
    job: Job,
    next_seq: u64,
}

pub struct JobStore {
    root: PathBuf,
    jobs: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
}

impl std::fmt::Debug for JobStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobStore").field("root", &self.root).finish()
    }
}

fn now() -> DateTime<Utc> {
    Utc::now()
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

/// Writes `bytes` to `path` through a synced temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(parent) = path.parent() {
        sync_dir(parent);
    }
    Ok(())
}

/// Replays journal bytes. Returns the job, the next sequence number and the
/// length of the good prefix.
fn replay(id: &str, bytes: &[u8]) -> Option<(Job, u64, usize)> {
    let mut job: Option<Job> = None;
    let mut good = 0usize;
    let mut seq = 0u64;
    let dir = format!("jobs/{id}/{REPORT_FILE}");
    for chunk in bytes.split_inclusive(|b| *b == b'\n') {
        if !chunk.ends_with(b"\n") {
            break;
        }
        let Ok(line) = serde_json::from_slice::<Line>(chunk) else { break };
        if line.seq != seq {
            break;
        }
        match (&mut job, line.event) {
            (None, Event::Submitted { url, git_ref }) => {
                job = Some(Job {
                    job_id: id.to_string(),
                    url,
                    git_ref,
                    state: JobState::Queued,
                    created_at: line.at,
                    updated_at: line.at,
                    result: None,
                });
            }
            (Some(j), Event::State { state }) if j.state.can_move_to(&state) => {
                if state == JobState::Completed {
                    j.result = Some(dir.clone());
                }
                j.state = state;
                j.updated_at = line.at;
            }
            _ => break,
        }
        good += chunk.len();
        seq += 1;
    }
    job.map(|j| (j, seq, good))
}

impl JobStore {
    /// Loads every job under `<workdir>/jobs`, repairing torn journals.
    pub fn open(workdir: &Path) -> Result<(Self, Recovery), StoreError> {
        let root = workdir.join("jobs");
        fs::create_dir_all(&root)?;
        let mut recovery = Recovery::default();
        let mut jobs = BTreeMap::new();
        for dir in fs::read_dir(&root)? {
            let dir = dir?;
            if !dir.file_type()?.is_dir() {
                continue;
            }
            let id = dir.file_name().to_string_lossy().to_string();
            let path = dir.path().join(JOURNAL_FILE);
            let bytes = fs::read(&path).unwrap_or_default();
            let Some((job, next_seq, good)) = replay(&id, &bytes) else {
                log::warn!("job {id}: no readable journal, skipping");
                recovery.skipped.push(id);
                continue;
            };
            if good < bytes.len() {
                log::warn!("job {id}: dropping {} journal bytes after the last good line", bytes.len() - good);
                write_atomic(&path, &bytes[..good])?;
                recovery.repaired.push(id.clone());
            }
            recovery.loaded += 1;
            jobs.insert(id, Arc::new(Mutex::new(Entry { job, next_seq })));
        }
        let store = JobStore {
            root,
            jobs: RwLock::new(jobs),
        };
        Ok((store, recovery))
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn report_path(&self, id: &str) -> PathBuf {
        self.job_dir(id).join(REPORT_FILE)
    }

    /// Persists a new job in state Queued.
    pub fn create(&self, url: &str, git_ref: Option<&str>) -> Result<Job, StoreError> {
        let id = ulid::Ulid::generate().to_string();
        let dir = self.job_dir(&id);
        fs::create_dir_all(&dir)?;
        let at = now();
        let line = Line {
            seq: 0,
            at,
            event: Event::Submitted {
                url: url.to_string(),
                git_ref: git_ref.map(str::to_string),
            },
        };
        write_atomic(&dir.join(JOURNAL_FILE), &line.encode())?;
        let job = Job {
            job_id: id.clone(),
            url: url.to_string(),
            git_ref: git_ref.map(str::to_string),
            state: JobState::Queued,
            created_at: at,
            updated_at: at,
            result: None,
        };
        self.jobs.write().unwrap().insert(
            id,
            Arc::new(Mutex::new(Entry {
                job: job.clone(),
                next_seq: 1,
            })),
        );
        Ok(job)
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, StoreError> {
        self.jobs
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<Job, StoreError> {
        Ok(self.entry(id)?.lock().unwrap().job.clone())
    }

    /// All jobs, oldest first.
    pub fn list(&self) -> Vec<Job> {
        let entries: Vec<_> = self.jobs.read().unwrap().values().cloned().collect();
        entries.iter().map(|e| e.lock().unwrap().job.clone()).collect()
    }

    /// A non-terminal job for the same repository and ref, if any.
    pub fn find_active(&self, url: &str, git_ref: Option<&str>) -> Option<Job> {
        self.list()
            .into_iter()
            .find(|j| !j.state.is_terminal() && j.url == url && j.git_ref.as_deref() == git_ref)
    }

    /// Journals and applies one forward transition.
    pub fn transition(&self, id: &str, next: JobState) -> Result<Job, StoreError> {
        let entry = self.entry(id)?;
        let mut entry = entry.lock().unwrap();
        if !entry.job.state.can_move_to(&next) {
            return Err(StoreError::InvalidTransition {
                id: id.to_string(),
                from: entry.job.state.to_string(),
                to: next.to_string(),
            });
        }
        let line = Line {
            seq: entry.next_seq,
            at: now(),
            event: Event::State { state: next.clone() },
        };
        let mut f = OpenOptions::new()
            .append(true)
            .open(self.job_dir(id).join(JOURNAL_FILE))?;
        f.write_all(&line.encode())?;
        f.sync_data()?;
        entry.next_seq += 1;
        if next == JobState::Completed {
            entry.job.result = Some(format!("jobs/{id}/{REPORT_FILE}"));
        }
        entry.job.state = next;
        entry.job.updated_at = line.at;
        Ok(entry.job.clone())
    }
}
