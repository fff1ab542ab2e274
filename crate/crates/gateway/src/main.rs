use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use repro_lens::pipeline::StateSink;
use repro_lens::{
    api, Formats, JobState, KernelBackend, Pipeline, PipelineConfig, ProvisionerBackend, ReportDocument, Service,
    ServiceConfig, DEFAULT_WORKERS,
};
use repro_lens_core::orchestrator::OrchestratorConfig;

#[derive(Parser)]
#[command(name = "repro-lens", version, about = "Re-execute the notebooks of a repository and report what reproduces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one job in the foreground and write its artifacts.
    Run(RunArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Turtle,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Ipykernel,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provisioner {
    Venv,
    Conda,
    Mock,
}

#[derive(Args)]
struct Execution {
    /// Kernel implementation.
    #[arg(long, value_enum, default_value = "ipykernel")]
    kernel: Kernel,
    /// Environment provisioner.
    #[arg(long, value_enum, default_value = "venv")]
    provisioner: Provisioner,
    /// Notebooks run at the same time within a repository.
    #[arg(long = "parallel", default_value_t = 1)]
    parallel: usize,
    /// Per-cell time budget in milliseconds.
    #[arg(long, default_value_t = 60_000)]
    cell_timeout: u64,
    /// Per-notebook time budget in milliseconds.
    #[arg(long, default_value_t = 300_000)]
    notebook_timeout: u64,
    /// Environments and job data live here.
    #[arg(long, env = "REPRO_LENS_WORKDIR", default_value = ".repro-lens")]
    workdir: PathBuf,
}

impl Execution {
    fn pipeline_config(&self, formats: Formats) -> PipelineConfig {
        PipelineConfig {
            workdir: self.workdir.clone(),
            kernel: match self.kernel {
                Kernel::Ipykernel => KernelBackend::Ipykernel,
                Kernel::Mock => KernelBackend::Mock,
            },
            provisioner: match self.provisioner {
                Provisioner::Venv => ProvisionerBackend::Venv,
                Provisioner::Conda => ProvisionerBackend::Conda,
                Provisioner::Mock => ProvisionerBackend::Mock,
            },
            orchestrator: OrchestratorConfig {
                cell_timeout: Duration::from_millis(self.cell_timeout),
                notebook_timeout: Duration::from_millis(self.notebook_timeout),
                parallelism: self.parallel.max(1),
                ..OrchestratorConfig::default()
            },
            formats,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// GitHub URL, `file://` URL or local directory.
    url: String,
    /// Branch, tag or commit.
    #[arg(long = "ref")]
    git_ref: Option<String>,
    /// Artifact directory.
    #[arg(long, default_value = "repro-lens-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
    #[command(flatten)]
    execution: Execution,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "REPRO_LENS_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Jobs run at the same time.
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    workers: usize,
    #[command(flatten)]
    execution: Execution,
}

/// Local directories are passed on as absolute paths.
fn resolve_url(url: &str) -> String {
    let path = Path::new(url);
    if !url.contains("://") && path.exists() {
        if let Ok(abs) = path.canonicalize() {
            return abs.display().to_string();
        }
    }
    url.to_string()
}

fn print_summary(doc: &ReportDocument, out: &Path) {
    let o = &doc.summary.outcomes;
    println!("repository  {} @ {}", doc.repository.url, doc.repository.git_ref);
    println!("notebooks   {}", doc.summary.totals.notebooks);
    println!("same        {}", o.same_results);
    println!("different   {}", o.different_results);
    println!("exception   {}", o.exceptions);
    println!("not run     {}", o.not_executed);
    for row in &doc.notebooks {
        println!("  {:<18} {}", row.outcome.category(), row.path);
    }
    println!("artifacts   {}", out.display());
}

fn run(args: RunArgs) -> ExitCode {
    let formats = match args.format {
        Format::Json => Formats { json: true, turtle: false },
        Format::Turtle => Formats { json: false, turtle: true },
        Format::Both => Formats { json: true, turtle: true },
    };
    let pipeline = match Pipeline::new(args.execution.pipeline_config(formats)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let scratch = args.execution.workdir.join("runs").join(ulid::Ulid::generate().to_string());
    let url = resolve_url(&args.url);
    let on_state: StateSink = Arc::new(|state: JobState| eprintln!("{state}"));
    let result = pipeline.run(&url, args.git_ref.as_deref(), &scratch, &args.out, on_state);
    let _ = std::fs::remove_dir_all(&scratch);
    match result {
        Ok(doc) => {
            eprintln!("{}", JobState::Completed);
            print_summary(&doc, &args.out);
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("{}", JobState::Failed { error });
            ExitCode::FAILURE
        }
    }
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()).expect("SIGTERM handler");
    tokio::select! {
        _ = ctrl_c => {}
        _ = term.recv() => {}
    }
}

fn serve(args: ServeArgs) -> ExitCode {
    let mut config = ServiceConfig::new(&args.execution.workdir);
    config.workers = args.workers.max(1);
    config.pipeline = args.execution.pipeline_config(Formats::default());
    let service = match Service::start(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let recovery = service.recovery();
    if !recovery.repaired.is_empty() || !recovery.skipped.is_empty() {
        log::warn!("repaired journals: {:?}; skipped job dirs: {:?}", recovery.repaired, recovery.skipped);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        axum::serve(listener, api::router(service.clone()))
            .with_graceful_shutdown(shutdown_signal())
            .await
    });
    match result {
        Ok(()) => {
            log::info!("shutting down; waiting for running jobs");
            service.shutdown();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info,zeromq=error")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Serve(args) => serve(args),
    }
}
