//! Apply subtask answers to a canonical document.
//!
//! Text fragments are joined, table fragments stacked, title levels
//! assigned and association links attached, in that order. Every dropped or
//! repaired answer leaves a flag; content conservation is checked at the end.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{Annotations, TableJudgement};
use crate::element::{CanonicalDocument, CanonicalElement, CoordUnit, ElementType, PageBox};
use crate::error::{ErrorCode, Flag};
use crate::predict::Pair;
use crate::table::{merge_fragments, CellFusion, TableGrid};
use crate::text::{join_fragments, JoinKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApplyError {
    #[error("content not conserved: {0}")]
    ConservationViolated(String),
}

impl ErrorCode for ApplyError {
    fn code(&self) -> &'static str {
        "apply.ConservationViolated"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextMerge {
    pub head: usize,
    pub absorbed: Vec<usize>,
    pub joins: Vec<JoinKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMerge {
    pub head: usize,
    pub lower: usize,
    pub judgement: Vec<u8>,
    pub dropped_header_cells: Vec<String>,
    pub fusions: Vec<CellFusion>,
    pub skipped_columns: Vec<usize>,
    pub collapsed_boundary_row: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeLog {
    pub text: Vec<TextMerge>,
    pub tables: Vec<TableMerge>,
    /// Absorbed idx -> idx of the element that now holds its content.
    pub absorbed_into: BTreeMap<usize, usize>,
}

impl MergeLog {
    pub fn resolve(&self, idx: usize) -> usize {
        self.absorbed_into.get(&idx).copied().unwrap_or(idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedDocument {
    pub doc_id: String,
    pub page_count: usize,
    pub coord_unit: CoordUnit,
    /// Surviving elements in reading order. Demoted titles carry type `text`.
    pub elements: Vec<CanonicalElement>,
    /// Title idx -> level (>= 1).
    pub levels: BTreeMap<usize, u32>,
    /// Titles predicted as not-a-title.
    pub demoted: BTreeSet<usize>,
    /// Caption/footnote idx -> visual idx.
    pub caption_links: BTreeMap<usize, usize>,
    /// Visual idx -> title idx.
    pub section_links: BTreeMap<usize, usize>,
    /// Every page region an element covers, fragments included.
    pub spans: BTreeMap<usize, Vec<PageBox>>,
    pub merge_log: MergeLog,
    pub flags: Vec<Flag>,
}

impl ResolvedDocument {
    pub fn element(&self, idx: usize) -> Option<&CanonicalElement> {
        self.elements
            .binary_search_by_key(&idx, |e| e.idx)
            .ok()
            .map(|i| &self.elements[i])
    }
}

pub fn apply(doc: &CanonicalDocument, ann: &Annotations) -> Result<ResolvedDocument, ApplyError> {
    let mut flags = Vec::new();
    let mut log = MergeLog::default();
    let mut elements = doc.elements.clone();
    let mut spans: BTreeMap<usize, Vec<PageBox>> = elements.iter().map(|e| (e.idx, vec![e.page_box()])).collect();

    merge_text(&mut elements, &mut spans, &ann.text_truncation, &mut log, &mut flags);
    let grids = merge_tables(&mut elements, &mut spans, &ann.table_truncation, &mut log, &mut flags);
    let (levels, demoted) = assign_levels(&mut elements, &ann.levels(), &log, &mut flags);
    let (caption_links, section_links) = attach_links(&elements, &ann.association, &log, &demoted, &mut flags);

    let out = ResolvedDocument {
        doc_id: doc.doc_id.clone(),
        page_count: doc.page_count,
        coord_unit: doc.coord_unit,
        elements,
        levels,
        demoted,
        caption_links,
        section_links,
        spans,
        merge_log: log,
        flags,
    };
    check_text_conservation(doc, &out)?;
    check_table_conservation(doc, &out, &grids)?;
    Ok(out)
}

fn position(elements: &[CanonicalElement], idx: usize) -> Option<usize> {
    elements.binary_search_by_key(&idx, |e| e.idx).ok()
}

fn merge_text(
    elements: &mut Vec<CanonicalElement>,
    spans: &mut BTreeMap<usize, Vec<PageBox>>,
    pairs: &[Pair],
    log: &mut MergeLog,
    flags: &mut Vec<Flag>,
) {
    let text_seq: Vec<usize> = elements.iter().filter(|e| e.etype == ElementType::Text).map(|e| e.idx).collect();
    let next_text: HashMap<usize, usize> = text_seq.windows(2).map(|w| (w[0], w[1])).collect();

    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    let mut targets: BTreeSet<usize> = BTreeSet::new();
    let mut sorted = pairs.to_vec();
    sorted.sort();
    sorted.dedup();
    for p in sorted {
        if next_text.get(&p.src) != Some(&p.tgt) {
            flags.push(Flag::info(
                "apply.NonAdjacentTextPair",
                format!("({}, {}) are not consecutive text blocks", p.src, p.tgt),
            ));
            continue;
        }
        if next.contains_key(&p.src) || targets.contains(&p.tgt) {
            flags.push(Flag::info("apply.ConflictingTextPair", format!("({}, {})", p.src, p.tgt)));
            continue;
        }
        next.insert(p.src, p.tgt);
        targets.insert(p.tgt);
    }

    let heads: Vec<usize> = next.keys().copied().filter(|s| !targets.contains(s)).collect();
    let mut absorbed_all = BTreeSet::new();
    for head in heads {
        let hpos = position(elements, head).expect("validated text idx");
        let mut content = elements[hpos].content.clone();
        let mut merge = TextMerge { head, absorbed: Vec::new(), joins: Vec::new() };
        let mut cur = head;
        while let Some(&tgt) = next.get(&cur) {
            let tpos = position(elements, tgt).expect("validated text idx");
            let (joined, kind) = join_fragments(&content, &elements[tpos].content);
            content = joined;
            merge.absorbed.push(tgt);
            merge.joins.push(kind);
            let extra = spans.remove(&tgt).unwrap_or_default();
            spans.entry(head).or_default().extend(extra);
            log.absorbed_into.insert(tgt, head);
            absorbed_all.insert(tgt);
            cur = tgt;
        }
        elements[hpos].content = content;
        log.text.push(merge);
    }
    elements.retain(|e| !absorbed_all.contains(&e.idx));
}

fn merge_tables(
    elements: &mut Vec<CanonicalElement>,
    spans: &mut BTreeMap<usize, Vec<PageBox>>,
    judgements: &[TableJudgement],
    log: &mut MergeLog,
    flags: &mut Vec<Flag>,
) -> BTreeMap<usize, TableGrid> {
    let mut grids: BTreeMap<usize, TableGrid> = BTreeMap::new();
    let mut ordered: Vec<&TableJudgement> = judgements.iter().filter(|j| !j.judgement.is_empty()).collect();
    ordered.sort_by_key(|j| (j.upper, j.lower));
    let mut absorbed = BTreeSet::new();

    for j in ordered {
        let head = log.resolve(j.upper);
        let (Some(hpos), Some(lpos)) = (position(elements, head), position(elements, j.lower)) else {
            flags.push(Flag::info("apply.UnknownIdx", format!("table pair ({}, {})", j.upper, j.lower)));
            continue;
        };
        if elements[hpos].etype != ElementType::Table
            || elements[lpos].etype != ElementType::Table
            || j.lower <= head
            || absorbed.contains(&j.lower)
        {
            flags.push(Flag::info("apply.InvalidTablePair", format!("({}, {})", j.upper, j.lower)));
            continue;
        }
        let upper_grid = match grids.get(&head) {
            Some(g) => Ok(g.clone()),
            None => TableGrid::parse(elements[hpos].table_html.as_deref().unwrap_or("")),
        };
        let merged = upper_grid
            .and_then(|u| TableGrid::parse(elements[lpos].table_html.as_deref().unwrap_or("")).map(|l| (u, l)))
            .and_then(|(u, l)| merge_fragments(&u, &l, &j.judgement));
        let m = match merged {
            Ok(m) => m,
            Err(e) => {
                flags.push(Flag::warning(
                    crate::error::ErrorCode::code(&e),
                    format!("tables ({}, {}) left separate: {e}", j.upper, j.lower),
                ));
                continue;
            }
        };
        if !m.skipped_columns.is_empty() {
            flags.push(Flag::info(
                "apply.SpanMismatch",
                format!("tables ({}, {}): columns {:?} not fused", j.upper, j.lower, m.skipped_columns),
            ));
        }
        elements[hpos].table_html = Some(m.grid.to_html());
        let extra = spans.remove(&j.lower).unwrap_or_default();
        spans.entry(head).or_default().extend(extra);
        log.absorbed_into.insert(j.lower, head);
        absorbed.insert(j.lower);
        log.tables.push(TableMerge {
            head,
            lower: j.lower,
            judgement: j.judgement.clone(),
            dropped_header_cells: m.dropped_cells,
            fusions: m.fusions,
            skipped_columns: m.skipped_columns,
            collapsed_boundary_row: m.collapsed_boundary_row,
        });
        grids.insert(head, m.grid);
    }
    // Chains re-point anything absorbed into an absorbed element.
    let snapshot = log.absorbed_into.clone();
    for target in log.absorbed_into.values_mut() {
        while let Some(&t) = snapshot.get(target) {
            *target = t;
        }
    }
    elements.retain(|e| !absorbed.contains(&e.idx));
    grids
}

fn assign_levels(
    elements: &mut [CanonicalElement],
    predicted: &BTreeMap<usize, i64>,
    log: &MergeLog,
    flags: &mut Vec<Flag>,
) -> (BTreeMap<usize, u32>, BTreeSet<usize>) {
    let mut levels = BTreeMap::new();
    let mut demoted = BTreeSet::new();
    let mut previous = 1u32;
    for e in elements.iter_mut().filter(|e| e.etype == ElementType::Title) {
        match predicted.get(&e.idx) {
            Some(-1) => {
                demoted.insert(e.idx);
                e.etype = ElementType::Text;
            }
            Some(&l) if l >= 1 => {
                previous = l as u32;
                levels.insert(e.idx, previous);
            }
            other => {
                flags.push(Flag::info(
                    "apply.UnknownTitle",
                    format!("title {} has level {:?}; using {previous}", e.idx, other),
                ));
                levels.insert(e.idx, previous);
            }
        }
    }
    for idx in predicted.keys() {
        if !levels.contains_key(idx) && !demoted.contains(idx) {
            let why = if log.absorbed_into.contains_key(idx) { "absorbed" } else { "not a title" };
            flags.push(Flag::info("apply.UnknownIdx", format!("level for {idx} ignored: {why}")));
        }
    }
    (levels, demoted)
}

fn attach_links(
    elements: &[CanonicalElement],
    links: &[Pair],
    log: &MergeLog,
    demoted: &BTreeSet<usize>,
    flags: &mut Vec<Flag>,
) -> (BTreeMap<usize, usize>, BTreeMap<usize, usize>) {
    let mut captions = BTreeMap::new();
    let mut sections = BTreeMap::new();
    for p in links {
        let (src, tgt) = (log.resolve(p.src), log.resolve(p.tgt));
        if demoted.contains(&tgt) {
            flags.push(Flag::info("apply.LinkToDemotedTitle", format!("{} -> {}", p.src, p.tgt)));
            continue;
        }
        let (Some(s), Some(t)) = (position(elements, src), position(elements, tgt)) else {
            flags.push(Flag::info("apply.UnknownIdx", format!("link {} -> {}", p.src, p.tgt)));
            continue;
        };
        let (st, tt) = (elements[s].etype, elements[t].etype);
        if !ElementType::may_link(st, tt) {
            flags.push(Flag::info("apply.TypeRuleViolation", format!("{st} {} -> {tt} {}", p.src, p.tgt)));
            continue;
        }
        let map = if st.is_visual() { &mut sections } else { &mut captions };
        match map.get(&src) {
            None => {
                map.insert(src, tgt);
            }
            Some(&kept) if kept == tgt => {}
            Some(&kept) => flags.push(Flag::info(
                "apply.DuplicateSource",
                format!("{} -> {} kept, -> {} dropped", src, kept, tgt),
            )),
        }
    }
    (captions, sections)
}

fn strip(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && *c != '-').collect()
}

fn check_text_conservation(before: &CanonicalDocument, after: &ResolvedDocument) -> Result<(), ApplyError> {
    let concat = |els: &mut dyn Iterator<Item = &CanonicalElement>| els.map(|e| strip(&e.content)).collect::<String>();
    let a = concat(&mut before.elements.iter().filter(|e| e.etype == ElementType::Text));
    let b = concat(
        &mut after
            .elements
            .iter()
            .filter(|e| e.etype == ElementType::Text && !after.demoted.contains(&e.idx)),
    );
    if a == b {
        Ok(())
    } else {
        Err(ApplyError::ConservationViolated(format!(
            "text: {} chars before, {} after",
            a.chars().count(),
            b.chars().count()
        )))
    }
}

fn check_table_conservation(
    before: &CanonicalDocument,
    after: &ResolvedDocument,
    merged: &BTreeMap<usize, TableGrid>,
) -> Result<(), ApplyError> {
    let mut counts: BTreeMap<String, i64> = BTreeMap::new();
    let mut add = |text: &str, d: i64| *counts.entry(text.to_string()).or_default() += d;
    let involved: BTreeSet<usize> = after
        .merge_log
        .tables
        .iter()
        .flat_map(|t| [t.head, t.lower])
        .collect();
    for e in before.elements.iter().filter(|e| involved.contains(&e.idx)) {
        let grid = TableGrid::parse(e.table_html.as_deref().unwrap_or(""))
            .map_err(|err| ApplyError::ConservationViolated(err.to_string()))?;
        grid.cells().iter().for_each(|c| add(&c.text, 1));
    }
    for grid in merged.values() {
        grid.cells().iter().for_each(|c| add(&c.text, -1));
    }
    for t in &after.merge_log.tables {
        t.dropped_header_cells.iter().for_each(|c| add(c, -1));
        for f in &t.fusions {
            add(&f.fused, 1);
            add(&f.upper, -1);
            add(&f.lower, -1);
        }
    }
    match counts.iter().find(|(_, &n)| n != 0) {
        None => Ok(()),
        Some((text, n)) => Err(ApplyError::ConservationViolated(format!("table cell {text:?} off by {n}"))),
    }
}
