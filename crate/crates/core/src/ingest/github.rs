use std::path::Path;
use std::time::Duration;

use flate2::read::GzDecoder;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Deserialize;

use super::archive::unpack_tar;
use super::IngestError;

pub const DEFAULT_GITHUB_API: &str = "https://api.github.com";

const REF_ENCODE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~')
    .remove(b'/');

#[derive(Deserialize)]
struct RepoInfo {
    default_branch: String,
}

#[derive(Deserialize)]
struct CommitInfo {
    sha: String,
}

/// Minimal client for the GitHub REST API v3: repository metadata, ref
/// resolution and commit tarballs.
#[derive(Debug, Clone)]
pub struct GitHubClient {
    api_base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

fn is_commit_hash(s: &str) -> bool {
    (s.len() == 40 || s.len() == 64) && s.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}

impl GitHubClient {
    pub fn new(api_base: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(30)))
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        GitHubClient {
            api_base: api_base.into().trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }

    pub fn api_base(&self) -> &str {
        &self.api_base
    }

    fn get(&self, path: &str, accept: &str) -> Result<ureq::http::Response<ureq::Body>, IngestError> {
        let url = format!("{}{path}", self.api_base);
        let mut req = self
            .agent
            .get(&url)
            .header("Accept", accept)
            .header("User-Agent", "repro-lens")
            .header("X-GitHub-Api-Version", "2022-11-28");
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let resp = req.call().map_err(|e| IngestError::NetworkFailure {
            detail: format!("GET {url}: {e}"),
        })?;
        if let Some(limited) = rate_limit(&resp) {
            return Err(limited);
        }
        Ok(resp)
    }

    fn read_json<T: serde::de::DeserializeOwned>(resp: ureq::http::Response<ureq::Body>) -> Result<T, IngestError> {
        let body = resp.into_body().read_to_string().map_err(|e| IngestError::NetworkFailure {
            detail: format!("reading response: {e}"),
        })?;
        serde_json::from_str(&body).map_err(|e| IngestError::NetworkFailure {
            detail: format!("unexpected response body: {e}"),
        })
    }

    pub fn default_branch(&self, owner: &str, name: &str) -> Result<String, IngestError> {
        let resp = self.get(&format!("/repos/{owner}/{name}"), "application/vnd.github+json")?;
        match resp.status().as_u16() {
            200 => Ok(Self::read_json::<RepoInfo>(resp)?.default_branch),
            404 => Err(IngestError::RepoNotFound {
                repo: format!("{owner}/{name}"),
            }),
            other => Err(unexpected(other)),
        }
    }

    /// Resolves a branch, tag or abbreviated hash to the full commit hash.
    pub fn resolve_ref(&self, owner: &str, name: &str, reference: &str) -> Result<String, IngestError> {
        let encoded = utf8_percent_encode(reference, REF_ENCODE);
        let resp = self.get(
            &format!("/repos/{owner}/{name}/commits/{encoded}"),
            "application/vnd.github+json",
        )?;
        match resp.status().as_u16() {
            200 => {
                let sha = Self::read_json::<CommitInfo>(resp)?.sha;
                if is_commit_hash(&sha) {
                    Ok(sha)
                } else {
                    Err(IngestError::NetworkFailure {
                        detail: format!("malformed commit hash {sha:?}"),
                    })
                }
            }
            404 | 422 => Err(IngestError::RefNotFound {
                reference: reference.to_string(),
            }),
            other => Err(unexpected(other)),
        }
    }

    /// Downloads the commit tarball into `dest` and returns the commit hash.
    pub fn fetch(&self, owner: &str, name: &str, reference: Option<&str>, dest: &Path) -> Result<String, IngestError> {
        let reference = match reference {
            Some(r) => {
                // Surfaces RepoNotFound before a ref lookup can report RefNotFound.
                self.default_branch(owner, name)?;
                r.to_string()
            }
            None => self.default_branch(owner, name)?,
        };
        let sha = self.resolve_ref(owner, name, &reference)?;
        let resp = self.get(&format!("/repos/{owner}/{name}/tarball/{sha}"), "application/vnd.github+json")?;
        match resp.status().as_u16() {
            200 => {}
            404 => {
                return Err(IngestError::RefNotFound { reference });
            }
            other => return Err(unexpected(other)),
        }
        let reader = resp.into_body().into_reader();
        unpack_tar(GzDecoder::new(reader), dest, 1).map_err(|e| IngestError::NetworkFailure {
            detail: format!("unpacking tarball: {e}"),
        })?;
        Ok(sha)
    }
}

fn unexpected(status: u16) -> IngestError {
    IngestError::NetworkFailure {
        detail: format!("unexpected HTTP status {status}"),
    }
}

fn header_u64(resp: &ureq::http::Response<ureq::Body>, name: &str) -> Option<u64> {
    resp.headers().get(name)?.to_str().ok()?.trim().parse().ok()
}

/// GitHub signals rate limiting with 429, or 403 plus either `retry-after` or
/// an exhausted `x-ratelimit-remaining`.
fn rate_limit(resp: &ureq::http::Response<ureq::Body>) -> Option<IngestError> {
    let status = resp.status().as_u16();
    if status != 403 && status != 429 {
        return None;
    }
    let retry_after = header_u64(resp, "retry-after");
    let exhausted = header_u64(resp, "x-ratelimit-remaining") == Some(0);
    if status == 403 && retry_after.is_none() && !exhausted {
        return None;
    }
    let retry_after_secs = retry_after
        .or_else(|| {
            let reset = header_u64(resp, "x-ratelimit-reset")?;
            let now = chrono::Utc::now().timestamp().max(0) as u64;
            Some(reset.saturating_sub(now))
        })
        .unwrap_or(60);
    Some(IngestError::RateLimited { retry_after_secs })
}
