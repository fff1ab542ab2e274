use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{EnvError, InstallStep};
use crate::version::{LanguageVersion, MajorMinor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpreterInfo {
    pub version: LanguageVersion,
    pub path: PathBuf,
}

/// Creates isolated environments and runs install steps in them.
///
/// Implementations append everything they observe (commands, stdout, stderr)
/// to `log`; the manager stores it in the handle or the failure.
pub trait Provisioner: Send + Sync {
    fn name(&self) -> &str;

    /// Interpreters this provisioner can base an environment on.
    fn interpreters(&self) -> Vec<InterpreterInfo>;

    /// Creates the environment in `env_dir` and returns its interpreter path.
    fn create(&self, base: &InterpreterInfo, env_dir: &Path, log: &mut String) -> Result<PathBuf, String>;

    /// Runs one install step; `Err` carries a short failure description.
    fn run_step(
        &self,
        env_python: &Path,
        env_dir: &Path,
        repo_root: &Path,
        step: &InstallStep,
        log: &mut String,
    ) -> Result<(), String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Exact,
    /// Nearest same-major version stood in for the requested one.
    Fallback,
    /// No version was requested; the newest host default was used.
    Default,
}

/// Picks the interpreter for a request: exact major.minor (highest patch),
/// else the nearest same-major minor (ties go to the newer one). Without a
/// request, the newest Python 3 (or newest overall).
pub fn select_interpreter(
    requested: Option<MajorMinor>,
    available: &[InterpreterInfo],
) -> Result<(InterpreterInfo, Selection), EnvError> {
    let newest = |it: &mut dyn Iterator<Item = &InterpreterInfo>| it.max_by_key(|i| i.version).cloned();
    match requested {
        None => newest(&mut available.iter().filter(|i| i.version.major == 3))
            .or_else(|| newest(&mut available.iter()))
            .map(|i| (i, Selection::Default))
            .ok_or_else(|| EnvError::InterpreterUnavailable {
                requested: "any".into(),
            }),
        Some(req) => {
            if let Some(exact) = newest(&mut available.iter().filter(|i| i.version.major_minor() == req)) {
                return Ok((exact, Selection::Exact));
            }
            available
                .iter()
                .filter(|i| i.version.major == req.major)
                .min_by_key(|i| {
                    let distance = (i.version.minor as i64 - req.minor as i64).abs();
                    (distance, std::cmp::Reverse(i.version))
                })
                .cloned()
                .map(|i| (i, Selection::Fallback))
                .ok_or_else(|| EnvError::InterpreterUnavailable {
                    requested: req.to_string(),
                })
        }
    }
}

/// Runs a command, appending the command line and its output to `log`.
pub fn run_logged(cmd: &mut Command, log: &mut String) -> bool {
    log.push_str(&format!("$ {cmd:?}\n"));
    match cmd.output() {
        Ok(out) => {
            log.push_str(&String::from_utf8_lossy(&out.stdout));
            log.push_str(&String::from_utf8_lossy(&out.stderr));
            if !out.status.success() {
                log.push_str(&format!("exit status: {}\n", out.status));
            }
            out.status.success()
        }
        Err(e) => {
            log.push_str(&format!("failed to spawn: {e}\n"));
            false
        }
    }
}

/// Version reported by `<python> --version`.
pub fn probe_version(python: &Path) -> Option<LanguageVersion> {
    let out = Command::new(python).arg("--version").output().ok()?;
    if !out.status.success() {
        return None;
    }
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    text.trim().strip_prefix("Python ")?.trim().parse().ok()
}

/// `python3`, `python3.N` and `python` executables on `PATH`, one per resolved
/// binary, newest first.
pub fn discover_host_interpreters() -> Vec<InterpreterInfo> {
    let mut found: Vec<InterpreterInfo> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let Some(path_var) = std::env::var_os("PATH") else {
        return found;
    };
    for dir in std::env::split_paths(&path_var) {
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| {
                n == "python" || n == "python3" || {
                    n.strip_prefix("python3.")
                        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
                }
            })
            .collect();
        names.sort();
        for name in names {
            let path = dir.join(&name);
            let Ok(real) = std::fs::canonicalize(&path) else {
                continue;
            };
            if !seen.insert(real) {
                continue;
            }
            if let Some(version) = probe_version(&path) {
                found.push(InterpreterInfo { version, path });
            }
        }
    }
    found.sort_by_key(|f| std::cmp::Reverse(f.version));
    found
}
