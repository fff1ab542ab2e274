use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::archive::unpack_tar;
use super::IngestError;

fn git(dir: &Path, args: &[&str]) -> Option<Vec<u8>> {
    let out = Command::new("git").arg("-C").arg(dir).args(args).output().ok()?;
    out.status.success().then_some(out.stdout)
}

fn git_line(dir: &Path, args: &[&str]) -> Option<String> {
    git(dir, args).map(|o| String::from_utf8_lossy(&o).trim().to_string())
}

/// True when `dir` is the top level of a git work tree (not merely inside one).
fn is_git_root(dir: &Path) -> bool {
    let Some(top) = git_line(dir, &["rev-parse", "--show-toplevel"]) else {
        return false;
    };
    match (fs::canonicalize(top), fs::canonicalize(dir)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Copies a local repository into `dest` and returns its ref: the commit
/// hash for git work trees (exported with `git archive`), otherwise a sha256
/// digest of the tree's paths and contents.
pub fn materialize(src: &Path, reference: Option<&str>, dest: &Path) -> Result<String, IngestError> {
    if !src.is_dir() {
        return Err(IngestError::RepoNotFound {
            repo: src.display().to_string(),
        });
    }
    if is_git_root(src) {
        let wanted = reference.unwrap_or("HEAD");
        let sha = git_line(src, &["rev-parse", "--verify", "--quiet", &format!("{wanted}^{{commit}}")])
            .filter(|s| !s.is_empty())
            .ok_or_else(|| IngestError::RefNotFound {
                reference: wanted.to_string(),
            })?;
        let tar = git(src, &["archive", "--format=tar", &sha]).ok_or_else(|| IngestError::Io {
            detail: format!("git archive {sha} failed"),
        })?;
        unpack_tar(Cursor::new(tar), dest, 0)?;
        return Ok(sha);
    }

    copy_tree(src, dest)?;
    let digest = tree_digest(dest)?;
    match reference {
        Some(r) if r != digest => Err(IngestError::RefNotFound { reference: r.to_string() }),
        _ => Ok(digest),
    }
}

fn copy_tree(src: &Path, dest: &Path) -> Result<(), IngestError> {
    let walker = WalkDir::new(src)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(|e| IngestError::Io { detail: e.to_string() })?;
        let rel = entry.path().strip_prefix(src).unwrap_or(entry.path());
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target)?;
        } else if entry.file_type().is_file() {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// sha256 over `(path, length, sha256(content))` of every file, in path order.
pub fn tree_digest(root: &Path) -> Result<String, IngestError> {
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        let entry = entry.map_err(|e| IngestError::Io { detail: e.to_string() })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            files.push((rel, entry.path().to_path_buf()));
        }
    }
    files.sort();
    let mut hasher = Sha256::new();
    for (rel, path) in files {
        let content = fs::read(path)?;
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        hasher.update((content.len() as u64).to_be_bytes());
        hasher.update(Sha256::digest(&content));
    }
    Ok(hex::encode(hasher.finalize()))
}
