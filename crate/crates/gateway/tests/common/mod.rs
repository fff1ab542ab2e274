#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Response, StatusCode, Uri};
use axum::Router;
use repro_lens::{Job, KernelBackend, Pipeline, ProvisionerBackend, Service, ServiceConfig};
use repro_lens_core::ingest::{Fetcher, GitHubClient};
use repro_lens_core::provenance::{Literal, Term, Triple};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn six_notebooks() -> PathBuf {
    fixtures().join("six-notebooks").canonicalize().unwrap()
}

pub fn corpus() -> PathBuf {
    fixtures().join("corpus").canonicalize().unwrap()
}

pub fn mock_config(workdir: &Path) -> ServiceConfig {
    let mut config = ServiceConfig::new(workdir);
    config.pipeline.kernel = KernelBackend::Mock;
    config.pipeline.provisioner = ProvisionerBackend::Mock;
    config
}

/// A minimal nbformat 4.5 Python notebook with one code cell per source.
pub fn notebook_json(cells: &[&str]) -> String {
    let cells: Vec<serde_json::Value> = cells
        .iter()
        .enumerate()
        .map(|(i, src)| {
            serde_json::json!({
                "cell_type": "code",
                "id": format!("c{i}"),
                "execution_count": null,
                "metadata": {},
                "outputs": [],
                "source": src,
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "nbformat": 4,
        "nbformat_minor": 5,
        "metadata": {
            "kernelspec": {"name": "python3", "display_name": "Python 3", "language": "python"},
            "language_info": {"name": "python", "version": "3.10.12"},
        },
        "cells": cells,
    }))
    .unwrap()
}

/// A repository whose single notebook takes about `seconds` to run.
pub fn slow_repo(root: &Path, seconds: u32) -> PathBuf {
    std::fs::create_dir_all(root).unwrap();
    let cells: Vec<String> = (0..seconds).map(|_| "import time\ntime.sleep(1)".to_string()).collect();
    let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
    std::fs::write(root.join("slow.ipynb"), notebook_json(&refs)).unwrap();
    root.canonicalize().unwrap()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .max_redirects(0)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

pub struct Reply {
    pub status: u16,
    pub content_type: Option<String>,
    pub location: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

fn reply(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
    let mut resp = resp.unwrap();
    let header = |name: &str| resp.headers().get(name).map(|v| v.to_str().unwrap().to_string());
    let content_type = header("content-type");
    let location = header("location");
    Reply {
        status: resp.status().as_u16(),
        content_type,
        location,
        body: resp.body_mut().read_to_vec().unwrap(),
    }
}

pub fn get(base: &str, path: &str) -> Reply {
    reply(agent().get(&format!("{base}{path}")).call())
}

pub fn post(base: &str, path: &str, body: &str) -> Reply {
    reply(
        agent()
            .post(&format!("{base}{path}"))
            .header("content-type", "application/json")
            .send(body),
    )
}

/// Submits and returns `(job_id, created)`.
pub fn submit(base: &str, url: &str, git_ref: Option<&str>) -> (String, bool) {
    let body = serde_json::json!({"url": url, "ref": git_ref}).to_string();
    let r = post(base, "/api/jobs", &body);
    assert_eq!(r.status, 202, "{}", r.text());
    let v = r.json();
    (v["job_id"].as_str().unwrap().to_string(), v["created"].as_bool().unwrap())
}

pub fn job(base: &str, id: &str) -> Job {
    let r = get(base, &format!("/api/jobs/{id}"));
    assert_eq!(r.status, 200, "{}", r.text());
    serde_json::from_slice(&r.body).unwrap()
}

pub fn wait_until(base: &str, id: &str, timeout: Duration, done: impl Fn(&Job) -> bool) -> Job {
    let deadline = Instant::now() + timeout;
    loop {
        let j = job(base, id);
        if done(&j) {
            return j;
        }
        assert!(Instant::now() < deadline, "job {id} stuck in {}", j.state);
        std::thread::sleep(Duration::from_millis(25));
    }
}

pub fn wait_terminal(base: &str, id: &str) -> Job {
    wait_until(base, id, Duration::from_secs(60), |j| j.state.is_terminal())
}

/// The service and API in this process, on an ephemeral port.
pub struct Server {
    pub base: String,
    pub service: Arc<Service>,
    rt: tokio::runtime::Runtime,
}

impl Server {
    pub fn start(config: ServiceConfig) -> Server {
        let pipeline = Pipeline::new(config.pipeline.clone()).unwrap();
        Self::start_with(config, pipeline)
    }

    pub fn start_with(config: ServiceConfig, pipeline: Pipeline) -> Server {
        let service = Service::start_with(config, pipeline).unwrap();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        let app = repro_lens::api::router(service.clone());
        rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server {
            base: format!("http://{addr}"),
            service,
            rt,
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.service.shutdown();
    }
}

/// `repro-lens serve` as a child process.
pub struct Daemon {
    pub base: String,
    child: Child,
}

impl Daemon {
    pub fn spawn(workdir: &Path, extra: &[&str]) -> Daemon {
        let log = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(workdir.with_extension("log"))
            .unwrap();
        let mut child = Command::new(env!("CARGO_BIN_EXE_repro-lens"))
            .args(["serve", "--port", "0", "--kernel", "mock", "--provisioner", "mock", "--workdir"])
            .arg(workdir)
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(log)
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Daemon { base, child }
    }

    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    /// SIGTERM, then waits for a clean exit.
    pub fn terminate(mut self) -> std::process::ExitStatus {
        Command::new("kill")
            .args(["-TERM", &self.child.id().to_string()])
            .status()
            .unwrap();
        self.child.wait().unwrap()
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub const GITHUB_SHA: &str = "4d1c0ffee0ddba11cafe5eed0123456789abcdef";

fn tarball(root: &Path) -> Vec<u8> {
    let gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    let mut builder = tar::Builder::new(gz);
    builder.append_dir_all(format!("octo-demo-{}", &GITHUB_SHA[..7]), root).unwrap();
    let mut gz = builder.into_inner().unwrap();
    gz.flush().unwrap();
    gz.finish().unwrap()
}

/// Serves `octo/demo` with the six-notebook fixture at [`GITHUB_SHA`], in
/// the shape of the GitHub REST API.
pub struct FakeGitHub {
    pub base: String,
    _rt: tokio::runtime::Runtime,
}

impl FakeGitHub {
    pub fn start() -> FakeGitHub {
        let tar = Arc::new(tarball(&six_notebooks()));
        let app = Router::new().fallback(move |uri: Uri| {
            let tar = tar.clone();
            async move {
                let json = |s: u16, v: serde_json::Value| {
                    Response::builder()
                        .status(StatusCode::from_u16(s).unwrap())
                        .header("content-type", "application/json")
                        .body(Body::from(v.to_string()))
                        .unwrap()
                };
                match uri.path() {
                    "/repos/octo/demo" => json(200, serde_json::json!({"default_branch": "main"})),
                    "/repos/octo/demo/commits/main" => json(200, serde_json::json!({"sha": GITHUB_SHA})),
                    p if p == format!("/repos/octo/demo/tarball/{GITHUB_SHA}") => Response::builder()
                        .header("content-type", "application/x-gzip")
                        .body(Body::from(tar.as_ref().clone()))
                        .unwrap(),
                    p if p.starts_with("/repos/octo/demo/commits/") => json(422, serde_json::json!({"message": "No commit"})),
                    _ => json(404, serde_json::json!({"message": "Not Found"})),
                }
            }
        });
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(1)
            .enable_all()
            .build()
            .unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
        FakeGitHub {
            base: format!("http://{addr}"),
            _rt: rt,
        }
    }

    pub fn fetcher(&self) -> Fetcher {
        Fetcher::new(GitHubClient::new(self.base.clone(), None))
    }
}

/// Triples of a Turtle document as read by an independent parser.
pub fn reparse_turtle(text: &str) -> Result<BTreeSet<Triple>, String> {
    let mut out = BTreeSet::new();
    for t in oxttl::TurtleParser::new().for_slice(text.as_bytes()) {
        let t = t.map_err(|e| e.to_string())?;
        let subject = match t.subject {
            oxrdf::NamedOrBlankNode::NamedNode(n) => n.into_string(),
            other => return Err(format!("unexpected subject {other}")),
        };
        let object = match t.object {
            oxrdf::Term::NamedNode(n) => Term::Iri(n.into_string()),
            oxrdf::Term::Literal(l) => Term::Literal(Literal {
                lexical: l.value().to_string(),
                datatype: l.datatype().as_str().to_string(),
            }),
            other => return Err(format!("unexpected object {other}")),
        };
        out.insert(Triple {
            subject,
            predicate: t.predicate.into_string(),
            object,
        });
    }
    Ok(out)
}
