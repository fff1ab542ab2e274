//! Repository snapshots: fetching, notebook enumeration and manifest discovery.

mod archive;
mod github;
mod local;
mod source;

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::notebook::{parse_notebook, Notebook, NotebookError};

pub use github::{GitHubClient, DEFAULT_GITHUB_API};
pub use source::{parse_repository_url, RepoSource};

/// Environment variable holding an optional bearer token for the hosting API.
pub const TOKEN_ENV: &str = "REPRO_LENS_TOKEN";
/// Environment variable overriding the GitHub API base URL.
pub const API_BASE_ENV: &str = "REPRO_LENS_GITHUB_API";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IngestError {
    #[error("invalid repository url: {url}")]
    InvalidUrl { url: String },
    #[error("unsupported repository host: {host}")]
    UnsupportedHost { host: String },
    #[error("repository not found: {repo}")]
    RepoNotFound { repo: String },
    #[error("rate limited, retry after {retry_after_secs}s")]
    RateLimited { retry_after_secs: u64 },
    #[error("network failure: {detail}")]
    NetworkFailure { detail: String },
    #[error("ref not found: {reference}")]
    RefNotFound { reference: String },
    #[error("i/o error: {detail}")]
    Io { detail: String },
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io { detail: e.to_string() }
    }
}

/// Listed in precedence order: earlier kinds win when several coexist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ManifestKind {
    EnvironmentYml,
    RequirementsTxt,
    Pipfile,
    SetupPy,
}

impl ManifestKind {
    pub fn from_file_name(name: &str) -> Option<Self> {
        match name {
            "environment.yml" => Some(ManifestKind::EnvironmentYml),
            "requirements.txt" => Some(ManifestKind::RequirementsTxt),
            "Pipfile" => Some(ManifestKind::Pipfile),
            "setup.py" => Some(ManifestKind::SetupPy),
            _ => None,
        }
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            ManifestKind::EnvironmentYml => "environment.yml",
            ManifestKind::RequirementsTxt => "requirements.txt",
            ManifestKind::Pipfile => "Pipfile",
            ManifestKind::SetupPy => "setup.py",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManifestRef {
    pub kind: ManifestKind,
    /// Repository-relative, `/`-separated.
    pub path: String,
}

impl ManifestRef {
    pub fn depth(&self) -> usize {
        self.path.matches('/').count()
    }
}

fn manifest_order(a: &ManifestRef, b: &ManifestRef) -> Ordering {
    a.kind
        .cmp(&b.kind)
        .then(a.depth().cmp(&b.depth()))
        .then_with(|| a.path.cmp(&b.path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookFile {
    pub path: String,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositorySnapshot {
    pub url: String,
    /// Resolved commit hash (or content digest for non-git local directories).
    pub repo_ref: String,
    pub root: PathBuf,
    pub notebook_entries: Vec<NotebookFile>,
    pub manifest_entries: Vec<ManifestRef>,
}

impl RepositorySnapshot {
    /// Indexes an already materialized tree.
    pub fn from_dir(url: impl Into<String>, repo_ref: impl Into<String>, root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        let (notebook_entries, mut manifest_entries) = index_tree(&root)?;
        manifest_entries.sort_by(manifest_order);
        Ok(RepositorySnapshot {
            url: url.into(),
            repo_ref: repo_ref.into(),
            root,
            notebook_entries,
            manifest_entries,
        })
    }
}

fn is_excluded_dir(name: &str) -> bool {
    name.starts_with('.') || name == ".ipynb_checkpoints"
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn index_tree(root: &Path) -> Result<(Vec<NotebookFile>, Vec<ManifestRef>), IngestError> {
    let mut notebooks = Vec::new();
    let mut manifests = Vec::new();
    let walker = WalkDir::new(root).follow_links(false).into_iter().filter_entry(|e| {
        e.depth() == 0 || !e.file_type().is_dir() || !is_excluded_dir(&e.file_name().to_string_lossy())
    });
    for entry in walker {
        let entry = entry.map_err(|e| IngestError::Io { detail: e.to_string() })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        let rel = relative(root, entry.path());
        if name.ends_with(".ipynb") {
            let size = entry.metadata().map(|m| m.len()).unwrap_or(0);
            notebooks.push(NotebookFile { path: rel, size });
        } else if let Some(kind) = ManifestKind::from_file_name(&name) {
            manifests.push(ManifestRef { kind, path: rel });
        }
    }
    notebooks.sort_by(|a, b| a.path.cmp(&b.path));
    Ok((notebooks, manifests))
}

/// Parses every notebook of the snapshot in path order. Per-file failures are
/// returned as data.
pub fn scan_notebooks(snapshot: &RepositorySnapshot) -> Vec<(String, Result<Notebook, NotebookError>)> {
    snapshot
        .notebook_entries
        .iter()
        .map(|f| {
            let parsed = match fs::read(snapshot.root.join(&f.path)) {
                Ok(bytes) => parse_notebook(&bytes, &f.path),
                Err(e) => Err(NotebookError::MalformedJson(format!("unreadable file: {e}"))),
            };
            (f.path.clone(), parsed)
        })
        .collect()
}

/// All dependency manifests, most specific first.
pub fn discover_environment(snapshot: &RepositorySnapshot) -> Vec<ManifestRef> {
    let mut manifests = snapshot.manifest_entries.clone();
    manifests.sort_by(manifest_order);
    manifests
}

/// Fetches repositories from GitHub or from the local filesystem.
#[derive(Debug, Clone)]
pub struct Fetcher {
    github: GitHubClient,
}

impl Fetcher {
    pub fn new(github: GitHubClient) -> Self {
        Fetcher { github }
    }

    /// GitHub client configured from `REPRO_LENS_GITHUB_API` and `REPRO_LENS_TOKEN`.
    pub fn from_env() -> Self {
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_GITHUB_API.to_string());
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Fetcher::new(GitHubClient::new(base, token))
    }

    /// Materializes the repository under `<job_dir>/repo` and indexes it.
    pub fn fetch(&self, url: &str, reference: Option<&str>, job_dir: &Path) -> Result<RepositorySnapshot, IngestError> {
        let dest = job_dir.join("repo");
        if dest.exists() {
            fs::remove_dir_all(&dest)?;
        }
        fs::create_dir_all(&dest)?;
        let repo_ref = match parse_repository_url(url)? {
            RepoSource::GitHub { owner, name } => self.github.fetch(&owner, &name, reference, &dest)?,
            RepoSource::Local(path) => local::materialize(&path, reference, &dest)?,
        };
        RepositorySnapshot::from_dir(url, repo_ref, dest)
    }
}

pub fn fetch_repository(url: &str, reference: Option<&str>, job_dir: &Path) -> Result<RepositorySnapshot, IngestError> {
    Fetcher::from_env().fetch(url, reference, job_dir)
}
