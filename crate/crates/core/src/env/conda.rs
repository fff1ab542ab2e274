use std::path::{Path, PathBuf};
use std::process::Command;

use super::manifest::{pipfile_requirements, requirement_names};
use super::provisioner::{run_logged, InterpreterInfo, Provisioner};
use super::InstallStep;
use crate::ingest::ManifestKind;
use crate::version::LanguageVersion;

/// Environments created with `conda create -p <env_dir>/conda python=X.Y`.
///
/// Conda supplies the interpreter itself, so the advertised interpreters are
/// a configured list of versions rather than host binaries.
#[derive(Debug, Clone)]
pub struct CondaProvisioner {
    conda: PathBuf,
    versions: Vec<LanguageVersion>,
}

impl CondaProvisioner {
    pub fn new(conda: impl Into<PathBuf>) -> Self {
        let versions = (6..=12)
            .map(|minor| LanguageVersion::new(3, minor, None))
            .chain(std::iter::once(LanguageVersion::new(2, 7, None)))
            .collect();
        CondaProvisioner {
            conda: conda.into(),
            versions,
        }
    }

    pub fn with_versions(mut self, versions: Vec<LanguageVersion>) -> Self {
        self.versions = versions;
        self
    }

    /// `CONDA_EXE` if set, else the first `conda` or `mamba` on PATH.
    pub fn locate() -> Option<Self> {
        if let Some(exe) = std::env::var_os("CONDA_EXE").map(PathBuf::from) {
            if exe.is_file() {
                return Some(Self::new(exe));
            }
        }
        let path = std::env::var_os("PATH")?;
        std::env::split_paths(&path)
            .flat_map(|d| [d.join("conda"), d.join("mamba")])
            .find(|p| p.is_file())
            .map(Self::new)
    }
}

impl Provisioner for CondaProvisioner {
    fn name(&self) -> &str {
        "conda"
    }

    fn interpreters(&self) -> Vec<InterpreterInfo> {
        self.versions
            .iter()
            .map(|v| InterpreterInfo {
                version: *v,
                path: PathBuf::from(format!("python={}", v.major_minor())),
            })
            .collect()
    }

    fn create(&self, base: &InterpreterInfo, env_dir: &Path, log: &mut String) -> Result<PathBuf, String> {
        let prefix = env_dir.join("conda");
        let ok = run_logged(
            Command::new(&self.conda)
                .args(["create", "--yes", "--quiet", "--prefix"])
                .arg(&prefix)
                .arg(format!("python={}", base.version.major_minor()))
                .arg("ipykernel"),
            log,
        );
        if ok {
            Ok(prefix.join("bin").join("python"))
        } else {
            Err(format!("conda create for python {}", base.version.major_minor()))
        }
    }

    fn run_step(
        &self,
        env_python: &Path,
        env_dir: &Path,
        repo_root: &Path,
        step: &InstallStep,
        log: &mut String,
    ) -> Result<(), String> {
        let manifest = repo_root.join(&step.manifest);
        let manifest_dir = manifest.parent().unwrap_or(repo_root).to_path_buf();
        let text = || std::fs::read_to_string(&manifest).map_err(|e| format!("reading {}: {e}", step.manifest));
        let mut pip = Command::new(env_python);
        pip.args(["-m", "pip", "install", "--disable-pip-version-check", "--no-input"])
            .current_dir(&manifest_dir);
        let ok = match step.kind {
            ManifestKind::EnvironmentYml => run_logged(
                Command::new(&self.conda)
                    .args(["env", "update", "--prefix"])
                    .arg(env_dir.join("conda"))
                    .arg("--file")
                    .arg(&manifest),
                log,
            ),
            ManifestKind::RequirementsTxt => {
                requirement_names(&text()?).is_empty() || run_logged(pip.arg("-r").arg(&manifest), log)
            }
            ManifestKind::Pipfile => {
                let reqs = pipfile_requirements(&text()?)?;
                reqs.is_empty() || run_logged(pip.args(reqs.iter().map(|(_, r)| r)), log)
            }
            ManifestKind::SetupPy => run_logged(pip.arg(&manifest_dir), log),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{} install of {} failed", step.kind.file_name(), step.manifest))
        }
    }
}
