use std::path::PathBuf;

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepoSource {
    GitHub { owner: String, name: String },
    Local(PathBuf),
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Accepts `https://github.com/owner/name[.git][/...]`, the same without a
/// scheme, `file:///path`, or an absolute local path.
pub fn parse_repository_url(url: &str) -> Result<RepoSource, IngestError> {
    let invalid = || IngestError::InvalidUrl { url: url.to_string() };
    let trimmed = url.trim();
    if let Some(path) = trimmed.strip_prefix("file://") {
        if !path.starts_with('/') {
            return Err(invalid());
        }
        return Ok(RepoSource::Local(PathBuf::from(path)));
    }
    if trimmed.starts_with('/') {
        return Ok(RepoSource::Local(PathBuf::from(trimmed)));
    }

    let rest = trimmed
        .strip_prefix("https://")
        .or_else(|| trimmed.strip_prefix("http://"))
        .unwrap_or(trimmed);
    let mut parts = rest.split('/');
    let host = parts.next().filter(|h| !h.is_empty()).ok_or_else(invalid)?;
    let host = host.to_ascii_lowercase();
    let owner = parts.next().ok_or_else(invalid)?;
    let name = parts.next().ok_or_else(invalid)?;
    let name = name.strip_suffix(".git").unwrap_or(name);
    if !valid_segment(owner) || !valid_segment(name) {
        return Err(invalid());
    }
    match host.as_str() {
        "github.com" | "www.github.com" => Ok(RepoSource::GitHub {
            owner: owner.to_string(),
            name: name.to_string(),
        }),
        _ if host.contains('.') => Err(IngestError::UnsupportedHost { host }),
        _ => Err(invalid()),
    }
}
