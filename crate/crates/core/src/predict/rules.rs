//! Deterministic rule baseline for all four subtasks.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    CellMergeJudgement, HierarchyPrediction, LevelItem, Pair, PairPrediction, PredictResult, Predicted, Predictor,
};
use crate::element::ElementType;
use crate::error::Flag;
use crate::filter::{first_wordish_char, AssocItem, Filters, TablePairCandidate, TextPairCandidate, TitleItem};
use crate::text::is_cjk;

/// Numbering style of a heading's opener.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Numbering {
    /// `1`, `1.2`, `1.2.3`; the payload is the component count.
    Decimal(usize),
    Part,
    Chapter,
    Section,
    Appendix,
    CjkChapter,
    CjkSection,
    CjkNumber,
    CjkParen,
    ParenNumber,
    ParenLetter,
    Roman,
    UpperLetter,
    LowerLetter,
    Plain,
}

static STYLES: LazyLock<Vec<(Regex, Numbering)>> = LazyLock::new(|| {
    let cjk = "一二三四五六七八九十百零〇";
    [
        (r"(?i)^part\s+(?:\d+|[ivxlcdm]+)\b".to_string(), Numbering::Part),
        (r"(?i)^chapter\s+(?:\d+|[ivxlcdm]+)\b".to_string(), Numbering::Chapter),
        (r"(?i)^section\s+\d".to_string(), Numbering::Section),
        (r"(?i)^appendix\b".to_string(), Numbering::Appendix),
        (format!("^第[{cjk}0-9]+[章部篇]"), Numbering::CjkChapter),
        (format!("^第[{cjk}0-9]+节"), Numbering::CjkSection),
        (format!("^[{cjk}]+[、.．]"), Numbering::CjkNumber),
        (format!("^[（(][{cjk}]+[)）]"), Numbering::CjkParen),
        (r"^[（(]\d+[)）]".to_string(), Numbering::ParenNumber),
        (r"^[（(][A-Za-z][)）]".to_string(), Numbering::ParenLetter),
        (r"^[IVXLC]+[.)]\s*\S".to_string(), Numbering::Roman),
        (r"^[A-Z][.)]\s".to_string(), Numbering::UpperLetter),
        (r"^[a-z][.)]\s".to_string(), Numbering::LowerLetter),
    ]
    .into_iter()
    .map(|(p, n)| (Regex::new(&p).expect("static pattern"), n))
    .collect()
});

static DECIMAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{1,4}(?:\.\d{1,3})*)(?:[.)、．]|\s|$)").expect("static pattern"));

pub fn classify_numbering(title: &str) -> Numbering {
    let t = title.trim();
    if let Some(c) = DECIMAL.captures(t) {
        return Numbering::Decimal(c[1].split('.').count());
    }
    STYLES
        .iter()
        .find(|(re, _)| re.is_match(t))
        .map_or(Numbering::Plain, |(_, n)| *n)
}

#[derive(Debug, Clone)]
pub struct RulePredictor {
    pub filters: Filters,
    /// Titles longer than this that end like a sentence are demoted to -1.
    pub demote_chars: usize,
}

impl Default for RulePredictor {
    fn default() -> Self {
        RulePredictor { filters: Filters::default(), demote_chars: 80 }
    }
}

impl RulePredictor {
    pub fn new(filters: Filters) -> Self {
        RulePredictor { filters, ..Default::default() }
    }

    /// Style-stack levelling. Each numbering style met for the first time
    /// nests under the current heading; meeting a style already on the stack
    /// pops back to it. Decimal depth maps directly onto consecutive levels.
    pub fn levels(&self, titles: &[TitleItem]) -> Vec<LevelItem> {
        let mut stack: Vec<Numbering> = Vec::new();
        let mut decimal_base: Option<usize> = None;
        let mut out = Vec::with_capacity(titles.len());
        for t in titles {
            let text = t.content.trim();
            if text.chars().count() > self.demote_chars && self.filters.punctuation.ends_with_terminator(text) {
                out.push(LevelItem { idx: t.idx, level: -1 });
                continue;
            }
            let style = classify_numbering(text);
            let level = match style {
                Numbering::Decimal(depth) => {
                    let base = *decimal_base.get_or_insert_with(|| (stack.len() + 1).saturating_sub(depth));
                    let level = base + depth;
                    stack.truncate(level - 1);
                    while stack.len() < level - 1 {
                        stack.push(Numbering::Decimal(stack.len() + 1 - base));
                    }
                    stack.push(style);
                    level
                }
                _ => {
                    let pos = stack.iter().position(|s| *s == style).unwrap_or(stack.len());
                    stack.truncate(pos);
                    stack.push(style);
                    if decimal_base.is_some_and(|b| pos < b + 1) {
                        decimal_base = None;
                    }
                    pos + 1
                }
            };
            out.push(LevelItem { idx: t.idx, level: level as i64 });
        }
        out
    }

    fn is_text_continuation(&self, c: &TextPairCandidate) -> bool {
        let punct = &self.filters.punctuation;
        let tail = c.src_tail.trim_end();
        if tail.is_empty() || punct.ends_with_terminator(tail) || self.filters.has_list_prefix(&c.tgt_head) {
            return false;
        }
        let mut rev = tail.chars().rev();
        let last = rev.next();
        let hyphenated = last == Some('-') && rev.next().is_some_and(char::is_alphabetic);
        let comma = last.is_some_and(|c| matches!(c, ',' | '，' | '、'));
        let lower_start = first_wordish_char(&c.tgt_head)
            .is_some_and(|ch| ch.is_lowercase() || ch.is_ascii_digit() || is_cjk(ch));
        hyphenated || comma || lower_start
    }

    fn cell_fragments(&self, upper: &str, lower: &str) -> bool {
        hyphen_split(upper)
            || !self.filters.punctuation.ends_with_terminator(upper)
                && first_wordish_char(lower).is_some_and(char::is_lowercase)
    }
}

/// Ends in a hyphen directly after a letter or digit.
fn hyphen_split(s: &str) -> bool {
    let mut rev = s.trim_end().chars().rev();
    rev.next() == Some('-') && rev.next().is_some_and(char::is_alphanumeric)
}

fn nearest_visual(items: &[AssocItem], ann: &AssocItem, target: ElementType, pages: &[usize]) -> Option<usize> {
    // Image captions and footnotes usually sit below their image, table
    // captions above their table; prefer that side on distance ties.
    let prefer_after = ann.etype == ElementType::TableCaption;
    items
        .iter()
        .filter(|v| v.etype == target && pages.contains(&v.page))
        .min_by_key(|v| {
            let after = v.idx > ann.idx;
            (v.idx.abs_diff(ann.idx), after != prefer_after, v.idx)
        })
        .map(|v| v.idx)
}

impl Predictor for RulePredictor {
    fn name(&self) -> &str {
        "rules"
    }

    fn title_hierarchy(&self, titles: &[TitleItem]) -> PredictResult<HierarchyPrediction> {
        Ok(Predicted::clean(HierarchyPrediction { items: self.levels(titles) }))
    }

    fn text_truncation(&self, candidates: &[TextPairCandidate]) -> PredictResult<PairPrediction> {
        let pairs = candidates
            .iter()
            .filter(|c| self.is_text_continuation(c))
            .map(|c| Pair { src: c.src_idx, tgt: c.tgt_idx })
            .collect();
        Ok(Predicted::clean(PairPrediction { pairs }))
    }

    fn association(&self, items: &[AssocItem]) -> PredictResult<PairPrediction> {
        let mut pairs = Vec::new();
        let mut flags = Vec::new();
        for (i, item) in items.iter().enumerate() {
            if let Some(target) = item.etype.annotation_target() {
                let adjacent = [item.page.saturating_sub(1), item.page + 1];
                let found = nearest_visual(items, item, target, &[item.page])
                    .or_else(|| nearest_visual(items, item, target, &adjacent));
                match found {
                    Some(tgt) => pairs.push(Pair { src: item.idx, tgt }),
                    None => flags.push(Flag::info(
                        "association.Unresolved",
                        format!("{} {} has no {} nearby", item.etype, item.idx, target),
                    )),
                }
            } else if item.etype.is_visual() {
                match items[..i].iter().rev().find(|t| t.etype == ElementType::Title) {
                    Some(t) => pairs.push(Pair { src: item.idx, tgt: t.idx }),
                    None => flags.push(Flag::info(
                        "association.NoPrecedingTitle",
                        format!("{} {} precedes every title", item.etype, item.idx),
                    )),
                }
            }
        }
        Ok(Predicted { value: PairPrediction { pairs }, flags })
    }

    fn table_truncation(&self, pair: &TablePairCandidate) -> PredictResult<CellMergeJudgement> {
        let (uc, lc) = pair.col_counts;
        let own_caption = pair.lower_caption.is_some() && !pair.continuation_marker;
        if uc != lc || own_caption {
            return Ok(Predicted::clean(CellMergeJudgement::default()));
        }
        let norm = |row: &[String]| row.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>();
        let lower_first = pair.lower_rows.first().map(|r| norm(r)).unwrap_or_default();
        if !pair.upper_header.is_empty() && lower_first == norm(&pair.upper_header) {
            return Ok(Predicted::clean(CellMergeJudgement { columns: vec![0; uc] }));
        }
        let upper_last = pair.upper_rows.last().cloned().unwrap_or_default();
        let cell = |row: &[String], j: usize| row.get(j).map_or(String::new(), |c| c.trim().to_string());
        let bounds: Vec<(String, String)> = (0..uc).map(|j| (cell(&upper_last, j), cell(&lower_first, j))).collect();
        // The boundary row continues when the lower side leaves cells blank
        // under filled upper cells, completes a hyphenated word, or
        // completes a text fragment while filling cells left blank above.
        let fragment = bounds.iter().any(|(u, l)| !u.is_empty() && !l.is_empty() && self.cell_fragments(u, l));
        let row_continues = bounds.iter().any(|(u, l)| {
            (!u.is_empty() && l.is_empty())
                || (hyphen_split(u) && !l.is_empty())
                || (fragment && u.is_empty() && !l.is_empty())
        });
        let columns = bounds
            .iter()
            .map(|(u, l)| {
                let q = if u.is_empty() || l.is_empty() { row_continues } else { self.cell_fragments(u, l) };
                u8::from(q)
            })
            .collect();
        Ok(Predicted::clean(CellMergeJudgement { columns }))
    }
}
