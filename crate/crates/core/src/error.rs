//! Module-qualified error codes and non-fatal flags.

use serde::{Deserialize, Serialize};

/// Errors that carry a stable, machine-readable code such as
/// `ingest.SchemaUnknown`. Codes are printed by the CLI on failure.
pub trait ErrorCode {
    fn code(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
}

/// A non-fatal observation recorded while processing a document: a dropped
/// prediction, an unresolved link, a fallback to the rule baseline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flag {
    pub severity: Severity,
    pub code: String,
    pub detail: String,
}

impl Flag {
    pub fn info(code: &str, detail: impl Into<String>) -> Flag {
        Flag { severity: Severity::Info, code: code.to_string(), detail: detail.into() }
    }

    pub fn warning(code: &str, detail: impl Into<String>) -> Flag {
        Flag { severity: Severity::Warning, code: code.to_string(), detail: detail.into() }
    }
}
