#![allow(dead_code)]

use std::path::{Path, PathBuf};

use repro_lens_core::env::{EnvironmentHandle, Selection};
use repro_lens_core::LanguageVersion;

/// An environment whose interpreter is an empty placeholder file, which is
/// all mock kernels check for.
pub fn fake_env(dir: &Path) -> EnvironmentHandle {
    let python = dir.join("bin").join("python");
    std::fs::create_dir_all(python.parent().unwrap()).unwrap();
    std::fs::write(&python, "").unwrap();
    handle(dir, python, LanguageVersion::new(3, 10, Some(12)))
}

pub fn handle(dir: &Path, python: PathBuf, version: LanguageVersion) -> EnvironmentHandle {
    EnvironmentHandle {
        env_id: "test-env".into(),
        env_dir: dir.to_path_buf(),
        interpreter_path: python,
        actual_interpreter_version: version,
        selection: Selection::Exact,
        satisfied: true,
        provision_log: String::new(),
    }
}
