use std::fs;
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};

/// Unpacks regular files and directories of a tar stream into `dest`,
/// dropping the first `strip` path components. Links and entries that would
/// escape `dest` are skipped.
pub fn unpack_tar<R: Read>(reader: R, dest: &Path, strip: usize) -> io::Result<()> {
    let mut archive = tar::Archive::new(reader);
    for entry in archive.entries()? {
        let mut entry = entry?;
        let kind = entry.header().entry_type();
        if !(kind.is_file() || kind.is_dir()) {
            continue;
        }
        let path = entry.path()?.into_owned();
        let mut rel = PathBuf::new();
        let mut safe = true;
        for c in path.components().skip(strip) {
            match c {
                Component::Normal(part) => rel.push(part),
                Component::CurDir => {}
                _ => safe = false,
            }
        }
        if !safe || rel.as_os_str().is_empty() {
            continue;
        }
        let target = dest.join(&rel);
        if kind.is_dir() {
            fs::create_dir_all(&target)?;
            continue;
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        entry.unpack(&target)?;
    }
    Ok(())
}
