//! Task-specific element selection.
//!
//! Each subtask only sees the elements that can influence its answer:
//! titles for hierarchy, titles/visuals/captions for association, the
//! boundary sentences of possibly-truncated text pairs, and table pairs
//! straddling a page break.

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::{BBox, CanonicalDocument, CanonicalElement, ElementType};
use crate::error::ErrorCode;
use crate::table::TableGrid;
use crate::text::Punctuation;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid prefix pattern `{pattern}`: {source}")]
    BadPattern { pattern: String, source: regex::Error },
    #[error("invalid width band [{0}, {1}]")]
    BadWidthBand(f64, f64),
}

impl ErrorCode for FilterError {
    fn code(&self) -> &'static str {
        "filtering.BadConfig"
    }
}

/// Filter settings as they appear in the pipeline config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub terminators: Vec<char>,
    pub closers: Vec<char>,
    /// Regexes matching list/outline openers such as `1.1`, `(a)`, `•`.
    pub prefix_patterns: Vec<String>,
    /// Character cap for extracted head/tail sentences.
    pub sentence_char_cap: usize,
    /// Accepted range of lower/upper table width ratio.
    pub width_band: [f64; 2],
    pub continuation_markers: Vec<String>,
    /// Rows taken from each side of a table boundary.
    pub row_window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let punct = Punctuation::default();
        Self {
            terminators: punct.terminators,
            closers: punct.closers,
            prefix_patterns: [
                r"^\d+(?:\.\d+)+",
                r"^\d+[.)、．]",
                r"^[(（]\s*[0-9A-Za-z]{1,4}\s*[)）]",
                r"^(?i:[ivxlcdm]{1,6})[.)]\s",
                r"^[A-Za-z][.)]\s",
                r"^[•·▪◦●○■□*\-–—]",
                r"^[一二三四五六七八九十]+[、.．]",
                r"^第[一二三四五六七八九十百0-9]+[章节条部]",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            sentence_char_cap: 200,
            width_band: [0.9, 1.1],
            continuation_markers: ["continued", "cont'd", "（续）", "续表"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            row_window: 3,
        }
    }
}

/// Compiled filter rules.
#[derive(Debug, Clone)]
pub struct Filters {
    pub config: FilterConfig,
    pub punctuation: Punctuation,
    prefixes: Vec<Regex>,
}

impl Filters {
    pub fn new(config: FilterConfig) -> Result<Filters, FilterError> {
        let prefixes = config
            .prefix_patterns
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|source| FilterError::BadPattern { pattern: p.clone(), source })
            })
            .collect::<Result<_, _>>()?;
        let [lo, hi] = config.width_band;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(FilterError::BadWidthBand(lo, hi));
        }
        let punctuation = Punctuation {
            terminators: config.terminators.clone(),
            closers: config.closers.clone(),
        };
        Ok(Filters { config, punctuation, prefixes })
    }

    /// Opens with a list or outline marker.
    pub fn has_list_prefix(&self, text: &str) -> bool {
        let t = text.trim_start();
        self.prefixes.iter().any(|re| re.is_match(t))
    }

    /// First letter-like character is an uppercase letter.
    pub fn has_uppercase_opener(&self, text: &str) -> bool {
        first_wordish_char(text).is_some_and(char::is_uppercase)
    }

    pub fn has_continuation_marker(&self, caption: &str) -> bool {
        let lower = caption.to_lowercase();
        self.config
            .continuation_markers
            .iter()
            .any(|m| lower.contains(&m.to_lowercase()))
    }
}

impl Default for Filters {
    fn default() -> Self {
        Filters::new(FilterConfig::default()).expect("default filter config is valid")
    }
}

/// First character that is not whitespace, an opening quote or bracket.
pub fn first_wordish_char(text: &str) -> Option<char> {
    text.chars()
        .find(|c| !c.is_whitespace() && !matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[' | '「' | '『' | '（'))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitleItem {
    pub idx: usize,
    pub content: String,
    pub page: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TitleSequence {
    pub items: Vec<TitleItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocItem {
    pub idx: usize,
    pub etype: ElementType,
    pub content: String,
    pub page: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssocCandidates {
    pub items: Vec<AssocItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    PageBreak,
    ColumnBreak,
    InterleavedBlock,
    SameFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPairCandidate {
    pub src_idx: usize,
    pub tgt_idx: usize,
    pub src_tail: String,
    pub tgt_head: String,
    pub boundary_kind: BoundaryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePairCandidate {
    pub upper_idx: usize,
    pub lower_idx: usize,
    pub upper_caption: Option<String>,
    pub lower_caption: Option<String>,
    /// First row of the upper fragment, used for repeated-header detection.
    pub upper_header: Vec<String>,
    /// Last `row_window` rows of the upper fragment, expanded cell texts.
    pub upper_rows: Vec<Vec<String>>,
    /// First `row_window` rows of the lower fragment.
    pub lower_rows: Vec<Vec<String>>,
    pub width_ratio: f64,
    pub col_counts: (usize, usize),
    pub continuation_marker: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTablePair {
    pub upper_idx: usize,
    pub lower_idx: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableCandidates {
    pub candidates: Vec<TablePairCandidate>,
    pub skipped: Vec<SkippedTablePair>,
}

pub fn filter_titles(doc: &CanonicalDocument) -> TitleSequence {
    TitleSequence {
        items: doc
            .elements
            .iter()
            .filter(|e| e.etype == ElementType::Title)
            .map(|e| TitleItem { idx: e.idx, content: e.content.clone(), page: e.page, bbox: e.bbox })
            .collect(),
    }
}

pub fn filter_association_candidates(doc: &CanonicalDocument) -> AssocCandidates {
    AssocCandidates {
        items: doc
            .elements
            .iter()
            .filter(|e| e.etype == ElementType::Title || e.etype.is_visual() || e.etype.is_visual_annotation())
            .map(|e| AssocItem {
                idx: e.idx,
                etype: e.etype,
                content: e.content.clone(),
                page: e.page,
                bbox: e.bbox,
            })
            .collect(),
    }
}

/// Adjacent text pairs that survive the clean-break exclusion rule.
///
/// A pair is excluded only when the source ends in a terminator AND the
/// target opens with a list prefix or an uppercase letter.
pub fn filter_text_truncation_candidates(
    doc: &CanonicalDocument,
    filters: &Filters,
) -> Vec<TextPairCandidate> {
    let positions: Vec<usize> = doc
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.etype == ElementType::Text)
        .map(|(pos, _)| pos)
        .collect();
    let cap = filters.config.sentence_char_cap;
    positions
        .windows(2)
        .filter_map(|w| {
            let (src, tgt) = (&doc.elements[w[0]], &doc.elements[w[1]]);
            let clean_end = filters.punctuation.ends_with_terminator(&src.content);
            let clean_start =
                filters.has_list_prefix(&tgt.content) || filters.has_uppercase_opener(&tgt.content);
            if clean_end && clean_start {
                return None;
            }
            Some(TextPairCandidate {
                src_idx: src.idx,
                tgt_idx: tgt.idx,
                src_tail: filters.punctuation.last_sentence(&src.content, cap),
                tgt_head: filters.punctuation.first_sentence(&tgt.content, cap),
                boundary_kind: boundary_kind(src, tgt, &doc.elements[w[0] + 1..w[1]]),
            })
        })
        .collect()
}

fn boundary_kind(src: &CanonicalElement, tgt: &CanonicalElement, between: &[CanonicalElement]) -> BoundaryKind {
    if src.page != tgt.page {
        BoundaryKind::PageBreak
    } else if between.iter().any(|e| !e.etype.is_independent()) {
        BoundaryKind::InterleavedBlock
    } else if tgt.bbox.y0 < src.bbox.y0 {
        BoundaryKind::ColumnBreak
    } else {
        BoundaryKind::SameFlow
    }
}

/// Table pairs across each page break that pass the width and column
/// (or continuation marker) gates.
pub fn filter_table_truncation_candidates(doc: &CanonicalDocument, filters: &Filters) -> TableCandidates {
    let mut out = TableCandidates::default();
    let els = &doc.elements;
    for page in 0..doc.page_count.saturating_sub(1) {
        let Some(upper_pos) = trailing_table(els, page) else { continue };
        let Some(lower_pos) = leading_table(els, page + 1) else { continue };
        let (upper, lower) = (&els[upper_pos], &els[lower_pos]);

        let grids = TableGrid::parse(upper.table_html.as_deref().unwrap_or(""))
            .and_then(|u| TableGrid::parse(lower.table_html.as_deref().unwrap_or("")).map(|l| (u, l)));
        let (ug, lg) = match grids {
            Ok(g) => g,
            Err(e) => {
                out.skipped.push(SkippedTablePair {
                    upper_idx: upper.idx,
                    lower_idx: lower.idx,
                    reason: e.to_string(),
                });
                continue;
            }
        };

        let upper_caption = caption_before(els, upper_pos);
        let lower_caption = caption_before(els, lower_pos);
        let width_ratio = lower.bbox.width() / upper.bbox.width();
        let [lo, hi] = filters.config.width_band;
        let marker = lower_caption.as_deref().is_some_and(|c| filters.has_continuation_marker(c));
        let same_cols = ug.cols() == lg.cols();
        if !(lo..=hi).contains(&width_ratio) || !(same_cols || marker) {
            continue;
        }

        let k = filters.config.row_window;
        out.candidates.push(TablePairCandidate {
            upper_idx: upper.idx,
            lower_idx: lower.idx,
            upper_caption,
            lower_caption,
            upper_header: ug.row_texts(0),
            upper_rows: (ug.rows().saturating_sub(k)..ug.rows()).map(|r| ug.row_texts(r)).collect(),
            lower_rows: (0..lg.rows().min(k)).map(|r| lg.row_texts(r)).collect(),
            width_ratio,
            col_counts: (ug.cols(), lg.cols()),
            continuation_marker: marker,
        });
    }
    out
}

/// Position of a table that is the last body element of `page`.
fn trailing_table(els: &[CanonicalElement], page: usize) -> Option<usize> {
    let (pos, last) = els
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, e)| e.page == page)
        .find(|(_, e)| !matches!(e.etype, ElementType::PageHeader | ElementType::PageFooter | ElementType::TableFootnote))?;
    (last.etype == ElementType::Table).then_some(pos)
}

/// Position of a table that is the first body element of `page`.
fn leading_table(els: &[CanonicalElement], page: usize) -> Option<usize> {
    let (pos, first) = els
        .iter()
        .enumerate()
        .filter(|(_, e)| e.page == page)
        .find(|(_, e)| !matches!(e.etype, ElementType::PageHeader | ElementType::PageFooter | ElementType::TableCaption))?;
    (first.etype == ElementType::Table).then_some(pos)
}

/// Nearest table caption above the table at `pos` on the same page, with no
/// other table in between.
fn caption_before(els: &[CanonicalElement], pos: usize) -> Option<String> {
    let page = els[pos].page;
    els[..pos]
        .iter()
        .rev()
        .take_while(|e| e.page == page && e.etype != ElementType::Table)
        .find(|e| e.etype == ElementType::TableCaption)
        .map(|e| e.content.clone())
}
