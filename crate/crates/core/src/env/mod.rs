//! Environment planning and provisioning.

mod conda;
mod manifest;
mod mock;
mod provisioner;
mod venv;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{ManifestKind, ManifestRef, RepositorySnapshot};
use crate::notebook::Notebook;
use crate::version::{LanguageVersion, MajorMinor};

pub use conda::CondaProvisioner;
pub use manifest::{normalize_name, pipfile_requirements, requirement_names};
pub use mock::{installed_packages, MockProvisioner, INSTALLED_PACKAGES_FILE, INTERPRETER_VERSION_FILE};
pub use provisioner::{
    discover_host_interpreters, probe_version, run_logged, select_interpreter, InterpreterInfo, Provisioner,
    Selection,
};
pub use venv::VenvProvisioner;

/// Environment variable naming the working directory root.
pub const WORKDIR_ENV: &str = "REPRO_LENS_WORKDIR";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvError {
    #[error("no interpreter available for python {requested}")]
    InterpreterUnavailable { requested: String },
    #[error("provisioning step {step} failed")]
    ProvisionFailed { step: String, log: String },
    #[error("i/o error: {detail}")]
    Io { detail: String },
}

impl From<std::io::Error> for EnvError {
    fn from(e: std::io::Error) -> Self {
        EnvError::Io { detail: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstallStep {
    pub kind: ManifestKind,
    /// Repository-relative manifest path.
    pub manifest: String,
}

impl std::fmt::Display for InstallStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.manifest, self.kind.file_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentPlan {
    /// Requested major.minor; `None` means the host default.
    pub interpreter_version: Option<MajorMinor>,
    pub manifests: Vec<ManifestRef>,
    pub install_steps: Vec<InstallStep>,
    pub env_id: String,
    pub repo_root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentHandle {
    pub env_id: String,
    pub env_dir: PathBuf,
    pub interpreter_path: PathBuf,
    pub actual_interpreter_version: LanguageVersion,
    pub selection: Selection,
    pub satisfied: bool,
    pub provision_log: String,
}

fn file_digest(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => hex::encode(Sha256::digest(bytes)),
        Err(_) => "missing".into(),
    }
}

/// Plans the environment of one notebook: the interpreter is the notebook's
/// `language_version` truncated to major.minor, and every manifest becomes an
/// install step in precedence order.
pub fn plan_environment(snapshot: &RepositorySnapshot, manifests: &[ManifestRef], nb: &Notebook) -> EnvironmentPlan {
    let interpreter_version = nb
        .language_version
        .as_deref()
        .and_then(|v| v.parse::<LanguageVersion>().ok())
        .map(|v| v.major_minor());
    let install_steps: Vec<InstallStep> = manifests
        .iter()
        .map(|m| InstallStep {
            kind: m.kind,
            manifest: m.path.clone(),
        })
        .collect();

    let mut hasher = Sha256::new();
    hasher.update(snapshot.repo_ref.as_bytes());
    hasher.update([0]);
    match interpreter_version {
        Some(v) => hasher.update(v.to_string().as_bytes()),
        None => hasher.update(b"default"),
    }
    for m in manifests {
        hasher.update([0]);
        hasher.update(m.path.as_bytes());
        hasher.update([0]);
        hasher.update(file_digest(&snapshot.root.join(&m.path)).as_bytes());
    }

    EnvironmentPlan {
        interpreter_version,
        manifests: manifests.to_vec(),
        install_steps,
        env_id: hex::encode(hasher.finalize()),
        repo_root: snapshot.root.clone(),
    }
}

const HANDLE_FILE: &str = "handle.json";

/// Provisions environments under `<workdir>/envs/<env_id>`, reusing any
/// environment that was completed before. Calls sharing an env_id are
/// serialized.
pub struct EnvManager {
    envs_root: PathBuf,
    provisioner: Arc<dyn Provisioner>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl EnvManager {
    pub fn new(workdir: &Path, provisioner: Arc<dyn Provisioner>) -> Self {
        EnvManager {
            envs_root: workdir.join("envs"),
            provisioner,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn provisioner(&self) -> &Arc<dyn Provisioner> {
        &self.provisioner
    }

    pub fn env_dir(&self, env_id: &str) -> PathBuf {
        self.envs_root.join(env_id)
    }

    fn lock_for(&self, env_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(env_id.to_string())
            .or_default()
            .clone()
    }

    pub fn provision(&self, plan: &EnvironmentPlan) -> Result<EnvironmentHandle, EnvError> {
        let lock = self.lock_for(&plan.env_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

        let env_dir = self.env_dir(&plan.env_id);
        let handle_path = env_dir.join(HANDLE_FILE);
        if let Some(cached) = fs::read(&handle_path)
            .ok()
            .and_then(|b| serde_json::from_slice::<EnvironmentHandle>(&b).ok())
        {
            log::debug!("reusing environment {}", plan.env_id);
            return Ok(cached);
        }

        let (base, selection) = select_interpreter(plan.interpreter_version, &self.provisioner.interpreters())?;
        if env_dir.exists() {
            fs::remove_dir_all(&env_dir)?;
        }
        fs::create_dir_all(&env_dir)?;

        let mut log = String::new();
        match (selection, plan.interpreter_version) {
            (Selection::Fallback, Some(req)) => log.push_str(&format!(
                "requested python {req} unavailable; using {} instead\n",
                base.version
            )),
            (Selection::Default, _) => log.push_str(&format!(
                "no language version declared; using default python {}\n",
                base.version
            )),
            _ => {}
        }
        let python = self
            .provisioner
            .create(&base, &env_dir, &mut log)
            .map_err(|detail| EnvError::ProvisionFailed {
                step: format!("create environment: {detail}"),
                log: log.clone(),
            })?;
        for step in &plan.install_steps {
            if let Err(detail) = self
                .provisioner
                .run_step(&python, &env_dir, &plan.repo_root, step, &mut log)
            {
                log.push_str(&format!("{detail}\n"));
                return Err(EnvError::ProvisionFailed {
                    step: step.to_string(),
                    log,
                });
            }
        }

        let handle = EnvironmentHandle {
            env_id: plan.env_id.clone(),
            env_dir: env_dir.clone(),
            interpreter_path: python,
            actual_interpreter_version: base.version,
            selection,
            satisfied: true,
            provision_log: log,
        };
        let bytes = serde_json::to_vec_pretty(&handle).map_err(|e| EnvError::Io { detail: e.to_string() })?;
        let tmp = env_dir.join(format!("{HANDLE_FILE}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &handle_path)?;
        Ok(handle)
    }
}
