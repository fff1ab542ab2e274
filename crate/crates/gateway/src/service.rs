//! Job submission, the worker pool and artifact lookup.

use std::collections::VecDeque;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use repro_lens_core::ingest::{parse_repository_url, IngestError};

use crate::job::{Job, JobState};
use crate::pipeline::{Pipeline, PipelineConfig, StateSink};
use crate::report::{ReportDocument, REPOSITORY_PROVENANCE_FILE};
use crate::store::{JobStore, Recovery, StoreError};

pub const DEFAULT_WORKERS: usize = 2;

/// Failure message of jobs that were running when the service stopped.
pub const INTERRUPTED: &str = "interrupted by a service restart";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid repository url: {0}")]
    InvalidUrl(String),
    #[error("unsupported repository host: {0}")]
    UnsupportedHost(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("job {0} not found")]
    JobNotFound(String),
    #[error("job {id} is not finished (state: {state})")]
    JobNotFinished { id: String, state: String },
    #[error("job {id} has no notebook {index}")]
    NotebookNotFound { id: String, index: usize },
    #[error("{0}")]
    NotAvailable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidUrl(_) => "invalid_url",
            ServiceError::UnsupportedHost(_) => "unsupported_host",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::JobNotFound(_) => "job_not_found",
            ServiceError::JobNotFinished { .. } => "job_not_finished",
            ServiceError::NotebookNotFound { .. } => "notebook_not_found",
            ServiceError::NotAvailable(_) => "not_available",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ServiceError::JobNotFound(id),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub workdir: PathBuf,
    pub workers: usize,
    pub pipeline: PipelineConfig,
}

impl ServiceConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        let workdir = workdir.into();
        ServiceConfig {
            pipeline: PipelineConfig::new(&workdir),
            workdir,
            workers: DEFAULT_WORKERS,
        }
    }
}

#[derive(Default)]
struct Queue {
    pending: Mutex<VecDeque<String>>,
    ready: Condvar,
    closed: AtomicBool,
}

impl Queue {
    fn push(&self, id: String) {
        self.pending.lock().unwrap().push_back(id);
        self.ready.notify_one();
    }

    fn pop(&self) -> Option<String> {
        let mut pending = self.pending.lock().unwrap();
        loop {
            if self.closed.load(Ordering::SeqCst) {
                return None;
            }
            if let Some(id) = pending.pop_front() {
                return Some(id);
            }
            pending = self.ready.wait(pending).unwrap();
        }
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.ready.notify_all();
    }
}

pub struct Service {
    store: Arc<JobStore>,
    pipeline: Arc<Pipeline>,
    queue: Arc<Queue>,
    submit_lock: Mutex<()>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    recovery: Recovery,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("store", &self.store).finish()
    }
}

fn run_job(store: &Arc<JobStore>, pipeline: &Pipeline, id: &str) {
    let job = match store.get(id) {
        Ok(j) => j,
        Err(e) => {
            log::error!("job {id} vanished: {e}");
            return;
        }
    };
    let dir = store.job_dir(id);
    let sink_store = store.clone();
    let sink_id = id.to_string();
    let on_state: StateSink = Arc::new(move |state| {
        if let Err(e) = sink_store.transition(&sink_id, state) {
            log::warn!("{e}");
        }
    });
    log::info!("job {id}: starting {}", job.url);
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        pipeline.run(&job.url, job.git_ref.as_deref(), &dir, &dir, on_state)
    }));
    let last = match outcome {
        Ok(Ok(_)) => JobState::Completed,
        Ok(Err(error)) => JobState::Failed { error },
        Err(_) => JobState::Failed {
            error: "internal error while running the job".into(),
        },
    };
    log::info!("job {id}: {last}");
    if let Err(e) = store.transition(id, last) {
        log::error!("{e}");
    }
}

impl Service {
    /// Opens the store, settles jobs left over from a previous process and
    /// starts the workers. Jobs that never left the queue are run again;
    /// jobs caught mid-run are marked Failed.
    pub fn start(config: ServiceConfig) -> Result<Arc<Service>, ServiceError> {
        let pipeline = Pipeline::new(config.pipeline.clone()).map_err(ServiceError::Internal)?;
        Self::start_with(config, pipeline)
    }

    pub fn start_with(config: ServiceConfig, pipeline: Pipeline) -> Result<Arc<Service>, ServiceError> {
        let (store, recovery) = JobStore::open(&config.workdir)?;
        let store = Arc::new(store);
        let queue = Arc::new(Queue::default());
        for job in store.list() {
            match job.state {
                JobState::Queued => queue.push(job.job_id),
                s if !s.is_terminal() => {
                    log::warn!("job {} was {s} when the service stopped", job.job_id);
                    store.transition(
                        &job.job_id,
                        JobState::Failed {
                            error: INTERRUPTED.into(),
                        },
                    )?;
                }
                _ => {}
            }
        }
        let pipeline = Arc::new(pipeline);
        let workers = (0..config.workers.max(1))
            .map(|i| {
                let (store, pipeline, queue) = (store.clone(), pipeline.clone(), queue.clone());
                std::thread::Builder::new()
                    .name(format!("job-worker-{i}"))
                    .spawn(move || {
                        while let Some(id) = queue.pop() {
                            run_job(&store, &pipeline, &id);
                        }
                    })
                    .expect("spawning a worker thread")
            })
            .collect();
        Ok(Arc::new(Service {
            store,
            pipeline,
            queue,
            submit_lock: Mutex::new(()),
            workers: Mutex::new(workers),
            recovery,
        }))
    }

    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Queues a job. Resubmitting a repository and ref while an earlier job
    /// for them is unfinished returns that job; the flag tells whether a new
    /// job was created.
    pub fn submit(&self, url: &str, git_ref: Option<&str>) -> Result<(Job, bool), ServiceError> {
        let url = url.trim();
        let git_ref = git_ref.map(str::trim).filter(|r| !r.is_empty());
        match parse_repository_url(url) {
            Ok(_) => {}
            Err(IngestError::UnsupportedHost { host }) => return Err(ServiceError::UnsupportedHost(host)),
            Err(_) => return Err(ServiceError::InvalidUrl(url.to_string())),
        }
        let _guard = self.submit_lock.lock().unwrap();
        if let Some(job) = self.store.find_active(url, git_ref) {
            return Ok((job, false));
        }
        let job = self.store.create(url, git_ref)?;
        self.queue.push(job.job_id.clone());
        Ok((job, true))
    }

    pub fn status(&self, id: &str) -> Result<Job, ServiceError> {
        Ok(self.store.get(id)?)
    }

    pub fn jobs(&self) -> Vec<Job> {
        self.store.list()
    }

    fn completed(&self, id: &str) -> Result<Job, ServiceError> {
        let job = self.store.get(id)?;
        if job.state != JobState::Completed {
            return Err(ServiceError::JobNotFinished {
                id: id.to_string(),
                state: job.state.to_string(),
            });
        }
        Ok(job)
    }

    /// The stored report document, byte for byte.
    pub fn report_bytes(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        self.completed(id)?;
        fs::read(self.store.report_path(id))
            .map_err(|e| ServiceError::NotAvailable(format!("report of job {id} is unreadable: {e}")))
    }

    pub fn report(&self, id: &str) -> Result<ReportDocument, ServiceError> {
        serde_json::from_slice(&self.report_bytes(id)?).map_err(|e| ServiceError::Internal(e.to_string()))
    }

    fn read_artifact(&self, id: &str, relative: &str) -> Result<Vec<u8>, ServiceError> {
        fs::read(self.store.job_dir(id).join(relative))
            .map_err(|_| ServiceError::NotAvailable(format!("job {id} has no {relative}")))
    }

    pub fn notebook_provenance(&self, id: &str, index: usize) -> Result<Vec<u8>, ServiceError> {
        let report = self.report(id)?;
        let row = report.notebooks.get(index).ok_or(ServiceError::NotebookNotFound {
            id: id.to_string(),
            index,
        })?;
        let file = row
            .provenance
            .as_deref()
            .ok_or_else(|| ServiceError::NotAvailable(format!("job {id} exported no provenance")))?;
        self.read_artifact(id, file)
    }

    pub fn repository_provenance(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        self.completed(id)?;
        self.read_artifact(id, REPOSITORY_PROVENANCE_FILE)
    }

    pub fn binder_url(&self, id: &str, index: usize) -> Result<String, ServiceError> {
        let report = self.report(id)?;
        let row = report.notebooks.get(index).ok_or(ServiceError::NotebookNotFound {
            id: id.to_string(),
            index,
        })?;
        row.binder_url
            .clone()
            .ok_or_else(|| ServiceError::UnsupportedHost(report.repository.url.clone()))
    }

    /// Stops taking jobs from the queue and waits for running ones.
    pub fn shutdown(&self) {
        self.queue.close();
        for handle in self.workers.lock().unwrap().drain(..) {
            let _ = handle.join();
        }
    }
}
