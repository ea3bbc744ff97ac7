//! Document-level subtask answers, shared by gold files and prediction
//! dumps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::PageBox;
use crate::error::ErrorCode;
use crate::predict::Pair;

pub const ANNOTATIONS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unsupported annotations version {0}")]
    Version(u32),
    #[error("invalid annotations: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ErrorCode for AnnotationError {
    fn code(&self) -> &'static str {
        match self {
            AnnotationError::Version(_) => "eval.AnnotationVersion",
            AnnotationError::Json(_) => "eval.AnnotationInvalid",
            AnnotationError::Io { .. } => "eval.Io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyEntry {
    pub idx: usize,
    pub level: i64,
    /// Title text, for readability only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableJudgement {
    pub upper: usize,
    pub lower: usize,
    /// Empty = not a continuation.
    pub judgement: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceQuery {
    pub id: String,
    pub boxes: Vec<PageBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotations {
    pub version: u32,
    pub doc_id: String,
    #[serde(default)]
    pub hierarchy: Vec<HierarchyEntry>,
    #[serde(default)]
    pub text_truncation: Vec<Pair>,
    #[serde(default)]
    pub association: Vec<Pair>,
    #[serde(default)]
    pub table_truncation: Vec<TableJudgement>,
    /// Evidence regions per retrieval query, for the bbox metrics.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<EvidenceQuery>,
}

impl Annotations {
    pub fn empty(doc_id: &str) -> Annotations {
        Annotations {
            version: ANNOTATIONS_VERSION,
            doc_id: doc_id.to_string(),
            hierarchy: Vec::new(),
            text_truncation: Vec::new(),
            association: Vec::new(),
            table_truncation: Vec::new(),
            evidence: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Annotations, AnnotationError> {
        let a: Annotations = serde_json::from_str(text)?;
        if a.version != ANNOTATIONS_VERSION {
            return Err(AnnotationError::Version(a.version));
        }
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Annotations, AnnotationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| AnnotationError::Io { path: path.display().to_string(), source })?;
        Annotations::from_json(&text)
    }

    pub fn levels(&self) -> BTreeMap<usize, i64> {
        self.hierarchy.iter().map(|h| (h.idx, h.level)).collect()
    }
}
