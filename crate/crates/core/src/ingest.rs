//! Normalization of heterogeneous OCR outputs into a [`CanonicalDocument`].
//!
//! Label alignment is data-driven: a [`Profile`] names the JSON fields that
//! carry each canonical attribute and maps raw labels onto [`ElementType`].
//! Built-in profiles live in `profiles/*.json`; further profiles can be
//! loaded from disk without code changes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::element::{BBox, CanonicalDocument, CanonicalElement, CoordUnit, ElementType};
use crate::error::ErrorCode;

const BUILTIN_PROFILES: [(&str, &str); 4] = [
    ("mineru", include_str!("../profiles/mineru.json")),
    ("generic", include_str!("../profiles/generic.json")),
    ("glm", include_str!("../profiles/glm.json")),
    ("paddle", include_str!("../profiles/paddle.json")),
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown source schema `{0}`")]
    SchemaUnknown(String),
    #[error("malformed input{}: {reason}", position_suffix(*.position))]
    MalformedInput { position: Option<usize>, reason: String },
    #[error("invalid bbox at block {position}: {reason}")]
    BBoxInvalid { position: usize, reason: String },
    #[error("invalid profile: {0}")]
    ProfileInvalid(String),
    #[error("input is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn position_suffix(position: Option<usize>) -> String {
    position.map(|p| format!(" at block {p}")).unwrap_or_default()
}

impl ErrorCode for IngestError {
    fn code(&self) -> &'static str {
        match self {
            IngestError::SchemaUnknown(_) => "ingest.SchemaUnknown",
            IngestError::MalformedInput { .. } => "ingest.MalformedInput",
            IngestError::BBoxInvalid { .. } => "ingest.BBoxInvalid",
            IngestError::ProfileInvalid(_) => "ingest.ProfileInvalid",
            IngestError::Json(_) => "ingest.MalformedInput",
            IngestError::Io { .. } => "ingest.Io",
        }
    }
}

/// Field names consulted for each canonical attribute, first match wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap {
    pub label: Vec<String>,
    pub content: Vec<String>,
    pub page: Vec<String>,
    pub bbox: Vec<String>,
    #[serde(default)]
    pub table_html: Vec<String>,
    #[serde(default)]
    pub asset_ref: Vec<String>,
    /// Numeric field whose positive value promotes a block to `title`
    /// (MinerU content lists mark headings as `text` with a `text_level`).
    #[serde(default)]
    pub heading_level: Option<String>,
}

/// A label-mapping profile for one OCR model family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Profiles whose label tables were reconstructed from public output
    /// samples rather than a documented schema.
    #[serde(default)]
    pub best_effort: bool,
    #[serde(default)]
    pub coord_unit: CoordUnit,
    #[serde(default)]
    pub page_base: usize,
    /// Key holding the block array when the document is a JSON object.
    #[serde(default = "default_blocks_key")]
    pub blocks_key: String,
    pub fields: FieldMap,
    pub labels: BTreeMap<String, ElementType>,
    #[serde(default)]
    pub drop: Vec<String>,
}

fn default_blocks_key() -> String {
    "blocks".to_string()
}

impl Profile {
    pub fn builtin(name: &str) -> Result<Profile, IngestError> {
        let (_, text) = BUILTIN_PROFILES
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| IngestError::SchemaUnknown(name.to_string()))?;
        serde_json::from_str(text).map_err(|e| IngestError::ProfileInvalid(format!("{name}: {e}")))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_PROFILES.iter().map(|(n, _)| *n)
    }

    pub fn from_path(path: &Path) -> Result<Profile, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| IngestError::ProfileInvalid(e.to_string()))
    }

    /// Resolve a profile by built-in name, or as a path to a profile file.
    pub fn resolve(spec: &str) -> Result<Profile, IngestError> {
        match Profile::builtin(spec) {
            Ok(p) => Ok(p),
            Err(IngestError::SchemaUnknown(_)) if Path::new(spec).is_file() => {
                Profile::from_path(Path::new(spec))
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedBlock {
    pub position: usize,
    pub label: String,
}

/// Accounting for everything normalization did besides a 1:1 copy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub profile: String,
    pub input_blocks: usize,
    pub kept: usize,
    pub dropped: Vec<DroppedBlock>,
    /// Raw label -> number of blocks mapped to `other` because the label was
    /// not in the profile.
    pub unknown_labels: BTreeMap<String, usize>,
}

impl NormalizationReport {
    pub fn unknown_count(&self) -> usize {
        self.unknown_labels.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub document: CanonicalDocument,
    pub report: NormalizationReport,
}

/// Map a raw OCR JSON document onto the canonical element sequence.
///
/// The raw document is either an array of blocks or an object holding the
/// blocks under `profile.blocks_key`, optionally with `doc_id`,
/// `page_count` and `coord_unit`.
pub fn normalize_elements(raw: &Value, profile: &Profile) -> Result<Normalized, IngestError> {
    let (blocks, header) = match raw {
        Value::Array(items) => (items.as_slice(), None),
        Value::Object(map) => {
            let blocks = map
                .get(&profile.blocks_key)
                .and_then(Value::as_array)
                .ok_or_else(|| IngestError::MalformedInput {
                    position: None,
                    reason: format!("expected an array under `{}`", profile.blocks_key),
                })?;
            (blocks.as_slice(), Some(map))
        }
        _ => {
            return Err(IngestError::MalformedInput {
                position: None,
                reason: "document must be a JSON array or object".into(),
            })
        }
    };

    let mut report = NormalizationReport {
        profile: profile.name.clone(),
        input_blocks: blocks.len(),
        ..Default::default()
    };
    let mut elements = Vec::with_capacity(blocks.len());

    for (position, block) in blocks.iter().enumerate() {
        let obj = block.as_object().ok_or_else(|| IngestError::MalformedInput {
            position: Some(position),
            reason: "block is not an object".into(),
        })?;
        let label = first_field(obj, &profile.fields.label)
            .and_then(Value::as_str)
            .ok_or_else(|| IngestError::MalformedInput {
                position: Some(position),
                reason: "missing label".into(),
            })?;
        if profile.drop.iter().any(|d| d == label) {
            report.dropped.push(DroppedBlock { position, label: label.to_string() });
            continue;
        }
        let mut etype = match profile.labels.get(label) {
            Some(t) => *t,
            None => {
                *report.unknown_labels.entry(label.to_string()).or_default() += 1;
                ElementType::Other
            }
        };
        if let Some(level_key) = &profile.fields.heading_level {
            let promoted = obj.get(level_key).and_then(Value::as_f64).is_some_and(|l| l >= 1.0);
            if promoted && etype == ElementType::Text {
                etype = ElementType::Title;
            }
        }

        let content = match first_field(obj, &profile.fields.content) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(parts)) => parts
                .iter()
                .filter_map(Value::as_str)
                .collect::<Vec<_>>()
                .join(" "),
            Some(other) => {
                return Err(IngestError::MalformedInput {
                    position: Some(position),
                    reason: format!("content must be a string, got {other}"),
                })
            }
        };

        let raw_page = first_field(obj, &profile.fields.page)
            .and_then(Value::as_u64)
            .ok_or_else(|| IngestError::MalformedInput {
                position: Some(position),
                reason: "missing or non-integer page".into(),
            })? as usize;
        let page = raw_page.checked_sub(profile.page_base).ok_or_else(|| {
            IngestError::MalformedInput {
                position: Some(position),
                reason: format!("page {raw_page} below profile base {}", profile.page_base),
            }
        })?;

        let bbox = parse_bbox(position, first_field(obj, &profile.fields.bbox))?;

        let table_html = if etype == ElementType::Table {
            let html = first_field(obj, &profile.fields.table_html)
                .and_then(Value::as_str)
                .ok_or_else(|| IngestError::MalformedInput {
                    position: Some(position),
                    reason: "table block without HTML body".into(),
                })?;
            Some(html.to_string())
        } else {
            None
        };
        let asset_ref =
            first_field(obj, &profile.fields.asset_ref).and_then(Value::as_str).map(str::to_string);

        elements.push(CanonicalElement {
            idx: elements.len(),
            etype,
            content,
            page,
            bbox,
            table_html,
            asset_ref,
        });
    }
    report.kept = elements.len();

    let max_page = elements.iter().map(|e| e.page + 1).max().unwrap_or(0);
    let declared = header.and_then(|h| h.get("page_count")).and_then(Value::as_u64);
    let page_count = match declared {
        Some(n) if (n as usize) < max_page => {
            return Err(IngestError::MalformedInput {
                position: None,
                reason: format!("page_count {n} but a block sits on page {}", max_page - 1),
            })
        }
        Some(n) => (n as usize).max(1),
        None => max_page.max(1),
    };
    let coord_unit = match header.and_then(|h| h.get("coord_unit")) {
        None => profile.coord_unit,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| IngestError::MalformedInput {
            position: None,
            reason: format!("unknown coord_unit {v}"),
        })?,
    };
    let doc_id = header
        .and_then(|h| h.get("doc_id"))
        .and_then(Value::as_str)
        .unwrap_or("doc")
        .to_string();

    Ok(Normalized {
        document: CanonicalDocument {
            doc_id,
            page_count,
            coord_unit,
            elements,
            source_schema: profile.name.clone(),
        },
        report,
    })
}

fn first_field<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[String]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(k))
}

fn parse_bbox(position: usize, value: Option<&Value>) -> Result<BBox, IngestError> {
    let arr = value.and_then(Value::as_array).ok_or_else(|| IngestError::MalformedInput {
        position: Some(position),
        reason: "missing bbox".into(),
    })?;
    if arr.len() != 4 {
        return Err(IngestError::BBoxInvalid {
            position,
            reason: format!("expected 4 coordinates, got {}", arr.len()),
        });
    }
    let mut coords = [0.0; 4];
    for (slot, v) in coords.iter_mut().zip(arr) {
        *slot = v.as_f64().ok_or_else(|| IngestError::BBoxInvalid {
            position,
            reason: format!("non-numeric coordinate {v}"),
        })?;
    }
    let bbox = BBox::from(coords);
    if !bbox.is_valid() {
        return Err(IngestError::BBoxInvalid {
            position,
            reason: format!("inverted or empty box {coords:?}"),
        });
    }
    Ok(bbox)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    NonMonotoneIdx,
    DuplicateIdx,
    PageOutOfRange,
    PageNotMonotone,
    BBoxInvalid,
    TableWithoutHtml,
    HtmlOnNonTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub idx: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every structural invariant of a canonical document. Never fails;
/// an empty report means the document is valid.
pub fn validate_document(doc: &CanonicalDocument) -> ValidationReport {
    let mut violations = Vec::new();
    let mut prev: Option<&CanonicalElement> = None;
    for e in &doc.elements {
        let mut push = |kind| violations.push(Violation { idx: e.idx, kind });
        if let Some(p) = prev {
            if e.idx == p.idx {
                push(ViolationKind::DuplicateIdx);
            } else if e.idx < p.idx {
                push(ViolationKind::NonMonotoneIdx);
            }
            if e.page < p.page {
                push(ViolationKind::PageNotMonotone);
            }
        }
        if e.page >= doc.page_count {
            push(ViolationKind::PageOutOfRange);
        }
        if !e.bbox.is_valid() {
            push(ViolationKind::BBoxInvalid);
        }
        match (e.etype == ElementType::Table, e.table_html.is_some()) {
            (true, false) => push(ViolationKind::TableWithoutHtml),
            (false, true) => push(ViolationKind::HtmlOnNonTable),
            _ => {}
        }
        prev = Some(e);
    }
    ValidationReport { violations }
}
