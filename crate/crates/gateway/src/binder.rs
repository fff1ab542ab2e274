//! Launch links for public Binder deployments.

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use repro_lens_core::ingest::{parse_repository_url, RepoSource};

pub const BINDER_BASE: &str = "https://mybinder.org/v2/gh";

/// Everything but the RFC 3986 unreserved characters gets encoded, so `/`
/// in a notebook path becomes `%2F`.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BinderError {
    #[error("binder links need a GitHub repository: {0}")]
    UnsupportedHost(String),
}

/// `https://mybinder.org/v2/gh/<owner>/<name>/<ref>?filepath=<path>`
pub fn binder_link(url: &str, git_ref: &str, notebook_path: &str) -> Result<String, BinderError> {
    match parse_repository_url(url) {
        Ok(RepoSource::GitHub { owner, name }) => Ok(format!(
            "{BINDER_BASE}/{owner}/{name}/{}?filepath={}",
            utf8_percent_encode(git_ref, COMPONENT),
            utf8_percent_encode(notebook_path, COMPONENT)
        )),
        _ => Err(BinderError::UnsupportedHost(url.to_string())),
    }
}
