//! The HTTP API over an in-process service with mock kernels.

mod common;

use std::time::Duration;

use common::*;
use repro_lens::{JobState, Pipeline, ReportDocument, RUN_FILE};
use repro_lens_core::analytics::analyze_report;
use repro_lens_core::orchestrator::RepoRunReport;

fn server(dir: &std::path::Path) -> Server {
    Server::start(mock_config(dir))
}

fn error_code(r: &Reply) -> String {
    r.json()["code"].as_str().unwrap().to_string()
}

#[test]
fn health() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(dir.path());
    let r = get(&s.base, "/api/health");
    assert_eq!(r.status, 200);
    assert_eq!(r.json()["status"], "ok");
}

#[test]
fn fixture_job_completes_with_expected_summary() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(dir.path());
    let url = six_notebooks().display().to_string();
    let (id, created) = submit(&s.base, &url, None);
    assert!(created);
    let job = wait_terminal(&s.base, &id);
    assert_eq!(job.state, JobState::Completed);
    assert_eq!(job.url, url);

    let r = get(&s.base, &format!("/api/jobs/{id}/report"));
    assert_eq!(r.status, 200);
    assert_eq!(r.content_type.as_deref(), Some("application/json"));
    let doc: ReportDocument = serde_json::from_slice(&r.body).unwrap();
    let o = &doc.summary.outcomes;
    assert_eq!(
        (o.same_results, o.different_results, o.exceptions, o.not_executed),
        (2, 1, 2, 1)
    );
    assert_eq!(doc.notebooks.len(), 6);
    assert_eq!(doc.repository.url, url);

    // The summary is exactly what the analytics give for the stored run.
    let run: RepoRunReport =
        serde_json::from_slice(&std::fs::read(s.service.store().job_dir(&id).join(RUN_FILE)).unwrap()).unwrap();
    assert_eq!(analyze_report(&run).1, doc.summary);

    // Fetching again gives the same bytes.
    let again = get(&s.base, &format!("/api/jobs/{id}/report"));
    assert_eq!(again.body, r.body);

    let listed = get(&s.base, "/api/jobs").json();
    assert_eq!(listed.as_array().unwrap().len(), 1);
    assert_eq!(listed[0]["job_id"], id.as_str());
    assert_eq!(listed[0]["state"]["kind"], "completed");
}

#[test]
fn invalid_submissions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(dir.path());
    let r = post(&s.base, "/api/jobs", r#"{"url": "not a url"}"#);
    assert_eq!((r.status, error_code(&r).as_str()), (400, "invalid_url"));
    let r = post(&s.base, "/api/jobs", r#"{"url": "https://gitlab.com/a/b"}"#);
    assert_eq!((r.status, error_code(&r).as_str()), (400, "unsupported_host"));
    let r = post(&s.base, "/api/jobs", r#"{"repo": "x"}"#);
    assert_eq!((r.status, error_code(&r).as_str()), (400, "invalid_request"));
    let r = post(&s.base, "/api/jobs", "{");
    assert_eq!((r.status, error_code(&r).as_str()), (400, "invalid_request"));
    assert!(s.service.jobs().is_empty());
}

#[test]
fn unknown_jobs_and_routes() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(dir.path());
    for path in [
        "/api/jobs/01J0000000000000000000000",
        "/api/jobs/nope/report",
        "/api/jobs/nope/provenance.ttl",
        "/api/jobs/nope/notebooks/0/binder",
    ] {
        let r = get(&s.base, path);
        assert_eq!((r.status, error_code(&r).as_str()), (404, "job_not_found"), "{path}");
    }
    let r = get(&s.base, "/api/elsewhere");
    assert_eq!(r.status, 404);
}

#[test]
fn unfinished_jobs_have_no_report_and_resubmits_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(&dir.path().join("work"));
    let repo = slow_repo(&dir.path().join("slow"), 3).display().to_string();
    let (id, created) = submit(&s.base, &repo, None);
    assert!(created);
    let (again, created_again) = submit(&s.base, &format!("  {repo} "), None);
    assert_eq!((again.as_str(), created_again), (id.as_str(), false));
    // A different ref is a different job.
    let (other, created_other) = submit(&s.base, &repo, Some("HEAD"));
    assert!(created_other);
    assert_ne!(other, id);

    let r = get(&s.base, &format!("/api/jobs/{id}/report"));
    assert_eq!((r.status, error_code(&r).as_str()), (409, "job_not_finished"));

    wait_terminal(&s.base, &id);
    let (fresh, created_fresh) = submit(&s.base, &repo, None);
    assert!(created_fresh, "finished jobs are not reused");
    assert_ne!(fresh, id);
}

#[test]
fn states_move_forward_only() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(&dir.path().join("work"));
    let repo = slow_repo(&dir.path().join("slow"), 2).display().to_string();
    let (id, _) = submit(&s.base, &repo, None);
    let mut seen = vec![];
    let deadline = std::time::Instant::now() + Duration::from_secs(30);
    loop {
        let j = job(&s.base, &id);
        if seen.last() != Some(&j.state) {
            seen.push(j.state.clone());
        }
        if j.state.is_terminal() || std::time::Instant::now() > deadline {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(seen.last(), Some(&JobState::Completed), "{seen:?}");
    assert!(seen.windows(2).all(|w| w[0].can_move_to(&w[1])), "{seen:?}");
    assert!(seen.contains(&JobState::Executing {
        path: "slow.ipynb".into()
    }));
}

#[test]
fn failed_fetch_marks_the_job_failed() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(dir.path());
    let (id, _) = submit(&s.base, "/definitely/not/here", None);
    let job = wait_terminal(&s.base, &id);
    match job.state {
        JobState::Failed { error } => assert!(!error.is_empty()),
        other => panic!("{other:?}"),
    }
    let r = get(&s.base, &format!("/api/jobs/{id}/report"));
    assert_eq!((r.status, error_code(&r).as_str()), (409, "job_not_finished"));
}

#[test]
fn provenance_routes_serve_turtle() {
    let dir = tempfile::tempdir().unwrap();
    let s = server(dir.path());
    let (id, _) = submit(&s.base, &six_notebooks().display().to_string(), None);
    wait_terminal(&s.base, &id);
    let r = get(&s.base, &format!("/api/jobs/{id}/provenance.ttl"));
    assert_eq!(r.status, 200);
    assert_eq!(r.content_type.as_deref(), Some("text/turtle; charset=utf-8"));
    assert!(!reparse_turtle(&r.text()).unwrap().is_empty());
    for index in 0..6 {
        let r = get(&s.base, &format!("/api/jobs/{id}/notebooks/{index}/prov.ttl"));
        assert_eq!(r.status, 200);
        reparse_turtle(&r.text()).unwrap();
    }
    let r = get(&s.base, &format!("/api/jobs/{id}/notebooks/6/prov.ttl"));
    assert_eq!((r.status, error_code(&r).as_str()), (404, "notebook_not_found"));
    // Local repositories have no Binder link.
    let r = get(&s.base, &format!("/api/jobs/{id}/notebooks/0/binder"));
    assert_eq!((r.status, error_code(&r).as_str()), (400, "unsupported_host"));
}

#[test]
fn github_job_redirects_to_binder() {
    let gh = FakeGitHub::start();
    let dir = tempfile::tempdir().unwrap();
    let config = mock_config(dir.path());
    let pipeline = Pipeline::new(config.pipeline.clone()).unwrap().with_fetcher(gh.fetcher());
    let s = Server::start_with(config, pipeline);
    let (id, _) = submit(&s.base, "https://github.com/octo/demo", None);
    let job = wait_terminal(&s.base, &id);
    assert_eq!(job.state, JobState::Completed);
    let doc = s.service.report(&id).unwrap();
    assert_eq!(doc.repository.git_ref, GITHUB_SHA);
    assert_eq!(doc.repository.requested_ref, None);
    let o = &doc.summary.outcomes;
    assert_eq!((o.same_results, o.different_results, o.exceptions, o.not_executed), (2, 1, 2, 1));

    let index = doc.notebooks.iter().position(|n| n.path == "analysis/load_data.ipynb").unwrap();
    let r = get(&s.base, &format!("/api/jobs/{id}/notebooks/{index}/binder"));
    assert_eq!(r.status, 302);
    assert_eq!(
        r.location.as_deref(),
        Some(format!("https://mybinder.org/v2/gh/octo/demo/{GITHUB_SHA}?filepath=analysis%2Fload_data.ipynb").as_str())
    );

    let (bad, _) = submit(&s.base, "https://github.com/octo/demo", Some("no-such-branch"));
    match wait_terminal(&s.base, &bad).state {
        JobState::Failed { error } => assert!(error.contains("no-such-branch"), "{error}"),
        other => panic!("{other:?}"),
    }
}
