//! One job from repository URL to written artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use repro_lens_core::env::{CondaProvisioner, EnvManager, MockProvisioner, Provisioner, VenvProvisioner};
use repro_lens_core::ingest::Fetcher;
use repro_lens_core::kernel::{IpykernelLauncher, KernelLauncher, MockLauncher};
use repro_lens_core::orchestrator::{Orchestrator, OrchestratorConfig, ProgressEvent, RepoRunReport};
use repro_lens_core::provenance::{export_prospective, export_repository, export_retrospective, serialize_turtle};

use crate::job::JobState;
use crate::report::{build_report, provenance_file, ReportDocument, REPOSITORY_PROVENANCE_FILE};
use crate::store::{write_atomic, REPORT_FILE};

/// Raw orchestrator output kept next to the report.
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelBackend {
    /// `python -m ipykernel_launcher` over ZeroMQ.
    Ipykernel,
    /// In-process interpreter for a small Python subset.
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProvisionerBackend {
    Venv,
    Conda,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub turtle: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { json: true, turtle: true }
    }
}

macro_rules! named_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

named_enum!(KernelBackend { "ipykernel" => KernelBackend::Ipykernel, "mock" => KernelBackend::Mock });
named_enum!(ProvisionerBackend {
    "venv" => ProvisionerBackend::Venv,
    "conda" => ProvisionerBackend::Conda,
    "mock" => ProvisionerBackend::Mock,
});

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Environments live under `<workdir>/envs`.
    pub workdir: PathBuf,
    pub kernel: KernelBackend,
    pub provisioner: ProvisionerBackend,
    pub orchestrator: OrchestratorConfig,
    pub formats: Formats,
}

impl PipelineConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            workdir: workdir.into(),
            kernel: KernelBackend::Ipykernel,
            provisioner: ProvisionerBackend::Venv,
            orchestrator: OrchestratorConfig::default(),
            formats: Formats::default(),
        }
    }
}

pub type StateSink = Arc<dyn Fn(JobState) + Send + Sync>;

pub struct Pipeline {
    config: PipelineConfig,
    envs: Arc<EnvManager>,
    fetcher: Fetcher,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline").field("config", &self.config).finish()
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, String> {
        let provisioner: Arc<dyn Provisioner> = match config.provisioner {
            ProvisionerBackend::Venv => Arc::new(VenvProvisioner::new()),
            ProvisionerBackend::Conda => {
                Arc::new(CondaProvisioner::locate().ok_or("no conda executable found (set CONDA_EXE or PATH)")?)
            }
            ProvisionerBackend::Mock => Arc::new(MockProvisioner::default()),
        };
        let envs = Arc::new(EnvManager::new(&config.workdir, provisioner));
        Ok(Pipeline {
            config,
            envs,
            fetcher: Fetcher::from_env(),
        })
    }

    pub fn with_fetcher(mut self, fetcher: Fetcher) -> Self {
        self.fetcher = fetcher;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn launcher(&self) -> Arc<dyn KernelLauncher> {
        match self.config.kernel {
            KernelBackend::Ipykernel => Arc::new(IpykernelLauncher::new()),
            KernelBackend::Mock => Arc::new(MockLauncher::mini_python()),
        }
    }

    /// Fetches into `<scratch>/repo`, runs every notebook and writes the
    /// artifacts into `out`. State changes are reported through `on_state`;
    /// the final Completed/Failed is left to the caller.
    pub fn run(
        &self,
        url: &str,
        git_ref: Option<&str>,
        scratch: &Path,
        out: &Path,
        on_state: StateSink,
    ) -> Result<ReportDocument, String> {
        on_state(JobState::Fetching);
        let snapshot = self.fetcher.fetch(url, git_ref, scratch).map_err(|e| e.to_string())?;
        log::info!("{url}: {} notebooks at {}", snapshot.notebook_entries.len(), snapshot.repo_ref);

        on_state(JobState::Provisioning);
        let launcher = self.launcher();
        let sink = on_state.clone();
        let orch = Orchestrator::new(self.envs.clone(), launcher.clone())
            .with_config(self.config.orchestrator.clone())
            .with_progress(Arc::new(move |event| {
                if let ProgressEvent::NotebookStarted { path } = event {
                    sink(JobState::Executing { path });
                }
            }));
        for (env_id, err) in orch.prepare_environments(&snapshot) {
            if let Some(err) = err {
                log::warn!("environment {env_id}: {err}");
            }
        }
        let report = orch.reproduce_repository(&snapshot);
        let leaked = launcher.registry().live_count();
        if leaked > 0 {
            log::warn!("{leaked} kernel processes outlived their sessions; killing them");
            launcher.registry().kill_all();
        }

        let doc = write_artifacts(&report, git_ref, out, self.config.formats).map_err(|e| e.to_string())?;
        let _ = fs::remove_dir_all(scratch.join("repo"));
        Ok(doc)
    }
}

/// Writes `run.json`, and `report.json` and/or the Turtle files as selected.
pub fn write_artifacts(
    report: &RepoRunReport,
    requested_ref: Option<&str>,
    out: &Path,
    formats: Formats,
) -> std::io::Result<ReportDocument> {
    fs::create_dir_all(out)?;
    let doc = build_report(report, requested_ref, formats.turtle);
    write_atomic(&out.join(RUN_FILE), &serde_json::to_vec(report)?)?;
    if formats.turtle {
        for entry in &report.notebooks {
            let mut graph = export_retrospective(&entry.record, &report.repo_ref);
            if let Some(nb) = entry.notebook() {
                graph.extend(&export_prospective(nb, &report.repo_ref));
            }
            let file = out.join(provenance_file(&entry.path));
            fs::create_dir_all(file.parent().expect("provenance files live in a directory"))?;
            write_atomic(&file, serialize_turtle(&graph).as_bytes())?;
        }
        let file = out.join(REPOSITORY_PROVENANCE_FILE);
        fs::create_dir_all(file.parent().expect("provenance files live in a directory"))?;
        write_atomic(&file, serialize_turtle(&export_repository(report)).as_bytes())?;
    }
    if formats.json {
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomic(&out.join(REPORT_FILE), &bytes)?;
    }
    Ok(doc)
}
