use serde::{Deserialize, Serialize};

use super::Notebook;
use crate::version::LanguageVersion;

/// Highest nbformat 4 minor revision with a published schema.
pub const MAX_KNOWN_MINOR: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub has_valid_format: bool,
    pub has_kernel_spec: bool,
    pub has_language_version: bool,
    pub overall_valid: bool,
}

impl ValidityReport {
    pub fn new(has_valid_format: bool, has_kernel_spec: bool, has_language_version: bool) -> Self {
        Self {
            has_valid_format,
            has_kernel_spec,
            has_language_version,
            overall_valid: has_valid_format && has_kernel_spec && has_language_version,
        }
    }

    /// Names of the checks that failed, for human-readable reasons.
    pub fn failed_checks(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.has_valid_format {
            out.push("nbformat");
        }
        if !self.has_kernel_spec {
            out.push("kernel specification");
        }
        if !self.has_language_version {
            out.push("language version");
        }
        out
    }
}

pub fn validate(nb: &Notebook) -> ValidityReport {
    let has_valid_format = nb.format_major == 4 && nb.format_minor <= MAX_KNOWN_MINOR;
    let has_kernel_spec = nb.kernel_spec.as_ref().is_some_and(|k| !k.name.is_empty());
    let has_language_version = nb
        .language_version
        .as_deref()
        .is_some_and(|v| v.parse::<LanguageVersion>().is_ok());
    ValidityReport::new(has_valid_format, has_kernel_spec, has_language_version)
}
