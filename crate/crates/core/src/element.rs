//! Canonical OCR element model.
//!
//! Every OCR backend is normalized into a [`CanonicalDocument`]: an ordered
//! list of typed blocks with a document-global reading-order index, a page
//! number and a bounding box. Field names here are part of the on-disk
//! contract (see `docs/formats.md`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Closed vocabulary of block types shared by all OCR profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementType {
    Title,
    Text,
    Image,
    Table,
    ImageCaption,
    TableCaption,
    ImageFootnote,
    TableFootnote,
    PageHeader,
    PageFooter,
    Formula,
    Other,
}

impl ElementType {
    pub const ALL: [ElementType; 12] = [
        ElementType::Title,
        ElementType::Text,
        ElementType::Image,
        ElementType::Table,
        ElementType::ImageCaption,
        ElementType::TableCaption,
        ElementType::ImageFootnote,
        ElementType::TableFootnote,
        ElementType::PageHeader,
        ElementType::PageFooter,
        ElementType::Formula,
        ElementType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementType::Title => "title",
            ElementType::Text => "text",
            ElementType::Image => "image",
            ElementType::Table => "table",
            ElementType::ImageCaption => "image_caption",
            ElementType::TableCaption => "table_caption",
            ElementType::ImageFootnote => "image_footnote",
            ElementType::TableFootnote => "table_footnote",
            ElementType::PageHeader => "page_header",
            ElementType::PageFooter => "page_footer",
            ElementType::Formula => "formula",
            ElementType::Other => "other",
        }
    }

    /// Images and tables.
    pub fn is_visual(self) -> bool {
        matches!(self, ElementType::Image | ElementType::Table)
    }

    /// Captions and footnotes of either visual kind.
    pub fn is_visual_annotation(self) -> bool {
        matches!(
            self,
            ElementType::ImageCaption
                | ElementType::ImageFootnote
                | ElementType::TableCaption
                | ElementType::TableFootnote
        )
    }

    /// Page furniture that sits outside the main body flow.
    pub fn is_independent(self) -> bool {
        matches!(self, ElementType::PageHeader | ElementType::PageFooter)
    }

    /// The visual type a caption or footnote may be linked to.
    pub fn annotation_target(self) -> Option<ElementType> {
        match self {
            ElementType::ImageCaption | ElementType::ImageFootnote => Some(ElementType::Image),
            ElementType::TableCaption | ElementType::TableFootnote => Some(ElementType::Table),
            _ => None,
        }
    }

    /// Whether a `src -> tgt` association link is permitted.
    ///
    /// Visuals link to titles, image captions/footnotes to images, table
    /// captions/footnotes to tables. Nothing else may be connected.
    pub fn may_link(src: ElementType, tgt: ElementType) -> bool {
        if src.is_visual() {
            return tgt == ElementType::Title;
        }
        src.annotation_target() == Some(tgt)
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownElementType(pub String);

impl fmt::Display for UnknownElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown element type `{}`", self.0)
    }
}

impl std::error::Error for UnknownElementType {}

impl FromStr for ElementType {
    type Err = UnknownElementType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownElementType(s.to_string()))
    }
}

/// Axis-aligned box `[x0, y0, x1, y1]`, y growing downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Finite coordinates with `x0 < x1` and `y0 < y1`.
    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
            && self.x0 < self.x1
            && self.y0 < self.y1
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// A box on a specific page.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageBox {
    pub page: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordUnit {
    #[default]
    Pixel,
    Normalized,
}

/// One OCR block after normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalElement {
    pub idx: usize,
    pub etype: ElementType,
    #[serde(default)]
    pub content: String,
    pub page: usize,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_html: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_ref: Option<String>,
}

impl CanonicalElement {
    pub fn page_box(&self) -> PageBox {
        PageBox { page: self.page, bbox: self.bbox }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalDocument {
    pub doc_id: String,
    pub page_count: usize,
    pub coord_unit: CoordUnit,
    pub elements: Vec<CanonicalElement>,
    pub source_schema: String,
}

impl CanonicalDocument {
    /// Last valid page index; `None` for a zero-page document.
    pub fn last_page(&self) -> Option<usize> {
        self.page_count.checked_sub(1)
    }

    pub fn element(&self, idx: usize) -> Option<&CanonicalElement> {
        self.elements
            .binary_search_by_key(&idx, |e| e.idx)
            .ok()
            .map(|pos| &self.elements[pos])
    }

    /// Restrict to elements whose page falls in `[start, end]`.
    pub fn page_slice(&self, start: usize, end: usize) -> CanonicalDocument {
        CanonicalDocument {
            doc_id: self.doc_id.clone(),
            page_count: self.page_count,
            coord_unit: self.coord_unit,
            elements: self
                .elements
                .iter()
                .filter(|e| e.page >= start && e.page <= end)
                .cloned()
                .collect(),
            source_schema: self.source_schema.clone(),
        }
    }

    /// Number of elements of `etype` on each page.
    pub fn page_counts(&self, etype: ElementType) -> Vec<usize> {
        let mut counts = vec![0; self.page_count];
        for e in self.elements.iter().filter(|e| e.etype == etype) {
            if let Some(c) = counts.get_mut(e.page) {
                *c += 1;
            }
        }
        counts
    }
}
