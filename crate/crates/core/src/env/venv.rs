use std::path::{Path, PathBuf};
use std::process::Command;

use super::manifest::{pipfile_requirements, requirement_names};
use super::provisioner::{discover_host_interpreters, run_logged, InterpreterInfo, Provisioner};
use super::InstallStep;
use crate::ingest::ManifestKind;

/// Environments built with `python -m venv` and pip.
///
/// Venvs are created with `--system-site-packages` so that a host-installed
/// ipykernel is visible; it is pip-installed only when missing.
#[derive(Debug, Clone, Default)]
pub struct VenvProvisioner {
    interpreters: Option<Vec<InterpreterInfo>>,
}

impl VenvProvisioner {
    /// Uses the interpreters found on `PATH`.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_interpreters(interpreters: Vec<InterpreterInfo>) -> Self {
        VenvProvisioner {
            interpreters: Some(interpreters),
        }
    }
}

fn pip(env_python: &Path) -> Command {
    let mut cmd = Command::new(env_python);
    cmd.args(["-m", "pip", "install", "--disable-pip-version-check", "--no-input"])
        .env("PIP_NO_INPUT", "1");
    cmd
}

impl Provisioner for VenvProvisioner {
    fn name(&self) -> &str {
        "venv"
    }

    fn interpreters(&self) -> Vec<InterpreterInfo> {
        self.interpreters.clone().unwrap_or_else(discover_host_interpreters)
    }

    fn create(&self, base: &InterpreterInfo, env_dir: &Path, log: &mut String) -> Result<PathBuf, String> {
        let venv = env_dir.join("venv");
        let ok = run_logged(
            Command::new(&base.path)
                .args(["-m", "venv", "--system-site-packages"])
                .arg(&venv),
            log,
        );
        if !ok {
            return Err(format!("creating venv with {}", base.path.display()));
        }
        let python = venv.join("bin").join("python");
        let has_kernel = run_logged(Command::new(&python).args(["-c", "import ipykernel"]), log);
        if !has_kernel && !run_logged(pip(&python).arg("ipykernel"), log) {
            return Err("installing ipykernel".into());
        }
        Ok(python)
    }

    fn run_step(
        &self,
        env_python: &Path,
        _env_dir: &Path,
        repo_root: &Path,
        step: &InstallStep,
        log: &mut String,
    ) -> Result<(), String> {
        let manifest = repo_root.join(&step.manifest);
        let manifest_dir = manifest.parent().unwrap_or(repo_root).to_path_buf();
        let text = || std::fs::read_to_string(&manifest).map_err(|e| format!("reading {}: {e}", step.manifest));
        let ok = match step.kind {
            ManifestKind::RequirementsTxt => {
                if requirement_names(&text()?).is_empty() {
                    log.push_str(&format!("{}: no requirements\n", step.manifest));
                    return Ok(());
                }
                run_logged(pip(env_python).arg("-r").arg(&manifest).current_dir(&manifest_dir), log)
            }
            ManifestKind::Pipfile => {
                let reqs = pipfile_requirements(&text()?)?;
                if reqs.is_empty() {
                    log.push_str(&format!("{}: no packages\n", step.manifest));
                    return Ok(());
                }
                run_logged(
                    pip(env_python)
                        .args(reqs.iter().map(|(_, r)| r))
                        .current_dir(&manifest_dir),
                    log,
                )
            }
            ManifestKind::SetupPy => run_logged(pip(env_python).arg(&manifest_dir), log),
            ManifestKind::EnvironmentYml => {
                log.push_str(&format!("{}: conda manifests need the conda provisioner\n", step.manifest));
                false
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{} install of {} failed", step.kind.file_name(), step.manifest))
        }
    }
}
