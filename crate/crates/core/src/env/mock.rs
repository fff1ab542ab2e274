use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::manifest::{normalize_name, pipfile_requirements, requirement_names};
use super::provisioner::{InterpreterInfo, Provisioner};
use super::InstallStep;
use crate::ingest::ManifestKind;
use crate::version::LanguageVersion;

/// File in the environment directory listing installed package names.
pub const INSTALLED_PACKAGES_FILE: &str = "installed-packages.txt";
/// File in the environment directory holding the interpreter version.
pub const INTERPRETER_VERSION_FILE: &str = "interpreter-version.txt";

const DEFAULT_INDEX: &[&str] = &[
    "numpy", "pandas", "matplotlib", "scipy", "scikit-learn", "seaborn", "requests", "ipykernel",
    "jupyter", "sympy", "networkx", "pillow", "tqdm", "pyyaml", "statsmodels", "plotly", "beautifulsoup4",
];

/// Provisioner test double: no processes, a fixed package index, and
/// counters for created environments and executed steps.
#[derive(Debug)]
pub struct MockProvisioner {
    versions: Vec<LanguageVersion>,
    index: BTreeSet<String>,
    creates: AtomicUsize,
    steps: AtomicUsize,
    executed: Mutex<Vec<InstallStep>>,
}

impl Default for MockProvisioner {
    fn default() -> Self {
        Self::new(vec![
            LanguageVersion::new(3, 8, Some(18)),
            LanguageVersion::new(3, 10, Some(12)),
        ])
    }
}

impl MockProvisioner {
    pub fn new(versions: Vec<LanguageVersion>) -> Self {
        MockProvisioner {
            versions,
            index: DEFAULT_INDEX.iter().map(|s| s.to_string()).collect(),
            creates: AtomicUsize::new(0),
            steps: AtomicUsize::new(0),
            executed: Mutex::new(Vec::new()),
        }
    }

    pub fn with_index<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, packages: I) -> Self {
        self.index = packages.into_iter().map(|p| normalize_name(p.as_ref())).collect();
        self
    }

    pub fn creates(&self) -> usize {
        self.creates.load(Ordering::SeqCst)
    }

    pub fn steps_run(&self) -> usize {
        self.steps.load(Ordering::SeqCst)
    }

    pub fn executed_steps(&self) -> Vec<InstallStep> {
        self.executed.lock().unwrap().clone()
    }

    fn install(&self, env_dir: &Path, names: &[String], log: &mut String) -> Result<(), String> {
        for name in names {
            if !self.index.contains(name) {
                log.push_str(&format!(
                    "ERROR: Could not find a version that satisfies the requirement {name}\nERROR: No matching distribution found for {name}\n"
                ));
                return Err(format!("no matching distribution for {name}"));
            }
            log.push_str(&format!("Successfully installed {name}\n"));
        }
        let list = env_dir.join(INSTALLED_PACKAGES_FILE);
        let mut installed: BTreeSet<String> = fs::read_to_string(&list)
            .unwrap_or_default()
            .lines()
            .map(str::to_string)
            .collect();
        installed.extend(names.iter().cloned());
        let body: String = installed.iter().map(|n| format!("{n}\n")).collect();
        fs::write(&list, body).map_err(|e| e.to_string())
    }
}

/// Reads the packages a mock environment has installed.
pub fn installed_packages(env_dir: &Path) -> BTreeSet<String> {
    fs::read_to_string(env_dir.join(INSTALLED_PACKAGES_FILE))
        .unwrap_or_default()
        .lines()
        .map(str::to_string)
        .collect()
}

fn conda_dependency_names(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix("- "))
        .map(str::trim)
        .filter(|d| !d.ends_with(':'))
        .filter_map(|d| {
            let name: String = d
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                .collect();
            (!name.is_empty() && name != "python" && name != "pip").then(|| normalize_name(&name))
        })
        .collect()
}

impl Provisioner for MockProvisioner {
    fn name(&self) -> &str {
        "mock"
    }

    fn interpreters(&self) -> Vec<InterpreterInfo> {
        self.versions
            .iter()
            .map(|v| InterpreterInfo {
                version: *v,
                path: PathBuf::from(format!("/mock/python{}", v.major_minor())),
            })
            .collect()
    }

    fn create(&self, base: &InterpreterInfo, env_dir: &Path, log: &mut String) -> Result<PathBuf, String> {
        self.creates.fetch_add(1, Ordering::SeqCst);
        let bin = env_dir.join("bin");
        fs::create_dir_all(&bin).map_err(|e| e.to_string())?;
        fs::write(env_dir.join(INTERPRETER_VERSION_FILE), base.version.to_string()).map_err(|e| e.to_string())?;
        fs::write(env_dir.join(INSTALLED_PACKAGES_FILE), "").map_err(|e| e.to_string())?;
        let python = bin.join("python");
        fs::write(&python, "").map_err(|e| e.to_string())?;
        log.push_str(&format!("created mock environment for python {}\n", base.version));
        Ok(python)
    }

    fn run_step(
        &self,
        _env_python: &Path,
        env_dir: &Path,
        repo_root: &Path,
        step: &InstallStep,
        log: &mut String,
    ) -> Result<(), String> {
        self.steps.fetch_add(1, Ordering::SeqCst);
        self.executed.lock().unwrap().push(step.clone());
        log.push_str(&format!("step {} {}\n", step.kind.file_name(), step.manifest));
        let text = fs::read_to_string(repo_root.join(&step.manifest))
            .map_err(|e| format!("reading {}: {e}", step.manifest))?;
        let names = match step.kind {
            ManifestKind::RequirementsTxt => requirement_names(&text),
            ManifestKind::Pipfile => pipfile_requirements(&text)?.into_iter().map(|(n, _)| n).collect(),
            ManifestKind::EnvironmentYml => conda_dependency_names(&text),
            ManifestKind::SetupPy => Vec::new(),
        };
        self.install(env_dir, &names, log)
    }
}
