//! Scripted kernels that interleave outputs of other requests with a cell's
//! own, and a replay that counts what ends up in the wrong result.

#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use proptest::prelude::*;
use repro_lens_core::env::{EnvironmentHandle, Selection};
use repro_lens_core::kernel::{
    start_kernel, ExecutionStatus, MockEvent, MockLauncher, ScriptedRunner, SessionConfig, StrayKind,
};
use repro_lens_core::notebook::StreamName;
use repro_lens_core::{KernelSpecInfo, LanguageVersion, Output};

#[derive(Debug, Clone)]
pub enum Step {
    Own(String),
    /// Stray message; `true` for a stale parent, `false` for a foreign one.
    Stray(StrayKind, bool),
}

pub fn step() -> impl Strategy<Value = Step> {
    let kind = prop_oneof![
        "[a-z]{1,6}".prop_map(StrayKind::Stream),
        Just(StrayKind::Error("Leaked".into())),
        Just(StrayKind::Idle),
        Just(StrayKind::Reply),
    ];
    prop_oneof![
        "[a-z ]{0,8}\n".prop_map(Step::Own),
        (kind, any::<bool>()).prop_map(|(k, stale)| Step::Stray(k, stale)),
    ]
}

/// Per cell: its steps and whether it ends in an error.
pub type Script = Vec<(Vec<Step>, bool)>;

pub fn script() -> impl Strategy<Value = Script> {
    proptest::collection::vec((proptest::collection::vec(step(), 0..10), any::<bool>()), 1..5)
}

fn fake_env(dir: &Path) -> EnvironmentHandle {
    let python = dir.join("bin").join("python");
    std::fs::create_dir_all(python.parent().unwrap()).unwrap();
    std::fs::write(&python, "").unwrap();
    EnvironmentHandle {
        env_id: "test-env".into(),
        env_dir: dir.to_path_buf(),
        interpreter_path: python,
        actual_interpreter_version: LanguageVersion::new(3, 10, Some(12)),
        selection: Selection::Exact,
        satisfied: true,
        provision_log: String::new(),
    }
}

fn without_traceback(outs: &[Output]) -> Vec<Output> {
    outs.iter()
        .map(|o| match o {
            Output::Error { ename, evalue, .. } => Output::Error {
                ename: ename.clone(),
                evalue: evalue.clone(),
                traceback: vec![],
            },
            o => o.clone(),
        })
        .collect()
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Replay {
    /// Outputs in a result that the cell did not produce.
    pub leaks: usize,
    /// Cells whose result differs from what they produced.
    pub mismatches: Vec<String>,
}

/// Executes every cell of `script` in one session on a scripted mock kernel.
pub fn replay(script: &Script) -> Replay {
    let mut runner = ScriptedRunner::new();
    for (i, (steps, fails)) in script.iter().enumerate() {
        let mut events: Vec<MockEvent> = steps
            .iter()
            .map(|s| match s {
                Step::Own(t) => MockEvent::stdout(t.clone()),
                Step::Stray(k, true) => MockEvent::Stale(k.clone()),
                Step::Stray(k, false) => MockEvent::Foreign(k.clone()),
            })
            .collect();
        if *fails {
            events.push(MockEvent::error("OwnError", format!("cell {i}")));
        }
        runner = runner.on(format!("cell{i}"), events);
    }
    let dir = tempfile::tempdir().unwrap();
    let launcher = MockLauncher::scripted(runner);
    let spec = KernelSpecInfo {
        name: "python3".into(),
        display_name: None,
    };
    let config = SessionConfig {
        startup_timeout: Duration::from_secs(5),
        ..SessionConfig::default()
    };
    let mut session = start_kernel(&launcher, &fake_env(dir.path()), &spec, dir.path(), config).unwrap();
    let mut out = Replay::default();
    for (i, (steps, fails)) in script.iter().enumerate() {
        let r = session.execute(&format!("cell{i}"), Duration::from_secs(1)).unwrap();
        let mut expected: Vec<Output> = steps
            .iter()
            .filter_map(|s| match s {
                Step::Own(t) => Some(Output::stream(StreamName::Stdout, t.clone())),
                Step::Stray(..) => None,
            })
            .collect();
        if *fails {
            expected.push(Output::Error {
                ename: "OwnError".into(),
                evalue: format!("cell {i}"),
                traceback: vec![],
            });
        }
        let got = without_traceback(&r.outputs);
        out.leaks += got.iter().filter(|o| !expected.contains(o)).count();
        let status = if *fails { ExecutionStatus::Error } else { ExecutionStatus::Ok };
        if got != expected || r.status != status || r.execution_count != Some(i as u32 + 1) {
            out.mismatches.push(format!(
                "cell{i}: got {got:?} ({:?}, {:?}), expected {expected:?} ({status:?})",
                r.status, r.execution_count
            ));
        }
    }
    out
}
