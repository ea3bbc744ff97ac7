//! Shared helpers for the integration suites: golden corpus access and
//! pinned-output comparison.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use docpost_core::annotations::Annotations;
use docpost_core::config::PipelineConfig;
use docpost_core::pipeline::{Pipeline, ProcessOutput};

/// Set to regenerate pinned outputs instead of comparing against them.
pub const UPDATE_ENV: &str = "DOCPOST_UPDATE_GOLDEN";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_root() -> PathBuf {
    fixtures().join("golden")
}

/// Golden documents as (name, directory), sorted by name.
pub fn golden_docs() -> Vec<(String, PathBuf)> {
    let mut out: Vec<_> = std::fs::read_dir(golden_root())
        .expect("golden corpus present")
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p))
        .collect();
    out.sort();
    out
}

pub fn gold(dir: &Path) -> Annotations {
    Annotations::load(&dir.join("gold.json")).expect("gold annotations parse")
}

pub fn rules_pipeline() -> Pipeline {
    Pipeline::new(PipelineConfig::default()).expect("default pipeline")
}

pub fn process(pipeline: &Pipeline, dir: &Path) -> ProcessOutput {
    pipeline.process_file(&dir.join("input.json")).expect("golden document processes")
}

pub fn updating() -> bool {
    std::env::var_os(UPDATE_ENV).is_some()
}

/// Compare `actual` with the pinned file, or rewrite it in update mode.
/// Returns a description of the first differing line on mismatch.
pub fn check_pinned(path: &Path, actual: &str) -> Result<(), String> {
    if updating() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{} differs at line {}: expected {:?}, got {:?}",
        path.display(),
        line + 1,
        expected.lines().nth(line),
        actual.lines().nth(line)
    ))
}

use std::collections::BTreeMap;

use docpost_core::apply::ResolvedDocument;
use docpost_core::element::{CanonicalDocument, ElementType};
use docpost_core::table::TableGrid;

/// Characters that carry content; joins may only add or remove whitespace
/// and the hyphen of a split word.
fn content_chars(s: &str) -> impl Iterator<Item = char> + '_ {
    s.chars().filter(|c| !c.is_whitespace() && *c != '-')
}

fn char_counts<'a>(texts: impl IntoIterator<Item = &'a str>) -> BTreeMap<char, i64> {
    let mut m = BTreeMap::new();
    for t in texts {
        for c in content_chars(t) {
            *m.entry(c).or_default() += 1;
        }
    }
    m
}

fn cell_texts(html: Option<&str>) -> Vec<String> {
    TableGrid::parse(html.unwrap_or(""))
        .map(|g| g.cells().iter().map(|c| c.text.clone()).collect())
        .unwrap_or_default()
}

/// Content-conservation check between a document and its resolved form.
/// Returns one description per violation.
pub fn conservation_violations(doc: &CanonicalDocument, res: &ResolvedDocument) -> Vec<String> {
    let mut out = Vec::new();
    let log = &res.merge_log;
    for e in &doc.elements {
        if res.element(log.resolve(e.idx)).is_none() {
            out.push(format!("element {} lost", e.idx));
        }
    }
    let mut text_heads: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for m in &log.text {
        text_heads.insert(m.head, std::iter::once(m.head).chain(m.absorbed.iter().copied()).collect());
    }
    let mut table_heads: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for m in &log.tables {
        table_heads.entry(m.head).or_insert_with(|| vec![m.head]).push(m.lower);
    }
    for e in &res.elements {
        let original = |i: usize| doc.element(i).expect("resolved idx exists in source");
        if let Some(parts) = text_heads.get(&e.idx) {
            let want: String = parts.iter().flat_map(|&i| content_chars(&original(i).content)).collect();
            let got: String = content_chars(&e.content).collect();
            if want != got {
                out.push(format!("text merge at {} changed content", e.idx));
            }
            if parts[1..].iter().any(|i| res.element(*i).is_some()) {
                out.push(format!("absorbed fragment of {} still present", e.idx));
            }
        } else if let Some(parts) = table_heads.get(&e.idx) {
            let mut want = BTreeMap::new();
            for &i in parts {
                for (c, n) in char_counts(cell_texts(original(i).table_html.as_deref()).iter().map(String::as_str)) {
                    *want.entry(c).or_default() += n;
                }
            }
            let mut got = char_counts(cell_texts(e.table_html.as_deref()).iter().map(String::as_str));
            for m in log.tables.iter().filter(|m| m.head == e.idx) {
                for (c, n) in char_counts(m.dropped_header_cells.iter().map(String::as_str)) {
                    *got.entry(c).or_default() += n;
                }
            }
            want.retain(|_, n| *n != 0);
            got.retain(|_, n| *n != 0);
            if want != got {
                out.push(format!("table merge at {} changed cell content", e.idx));
            }
        } else {
            let o = original(e.idx);
            let demoted = o.etype == ElementType::Title && e.etype == ElementType::Text;
            if o.content != e.content || o.table_html != e.table_html || (o.etype != e.etype && !demoted) {
                out.push(format!("untouched element {} changed", e.idx));
            }
        }
    }
    out
}
