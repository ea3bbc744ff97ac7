//! Stage-level checks on fixture documents: normalization against a
//! hand-written canonical form, candidate filtering counts, chunk plans.

mod common;

use common::*;
use docpost_core::element::{CanonicalDocument, ElementType};
use docpost_core::filter::{filter_table_truncation_candidates, filter_text_truncation_candidates, filter_titles, BoundaryKind, Filters};
use docpost_core::ingest::{normalize_elements, validate_document, Profile};
use docpost_core::predict::{Pair, Predictor, RulePredictor};

fn load(name: &str) -> CanonicalDocument {
    let dir = golden_root().join(name);
    rules_pipeline().load_document(&serde_json::from_str(&std::fs::read_to_string(dir.join("input.json")).unwrap()).unwrap()).unwrap().0
}

#[test]
fn mineru_fixture_normalizes_to_hand_written_form() {
    let dir = fixtures().join("ingest");
    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("mineru_12.json")).unwrap()).unwrap();
    let expected: CanonicalDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mineru_12.expected.json")).unwrap()).unwrap();
    let out = normalize_elements(&raw, &Profile::builtin("mineru").unwrap()).unwrap();
    assert_eq!(out.document, expected);
    assert_eq!(out.report.input_blocks, 12);
    assert_eq!(out.report.kept, 11);
    assert_eq!(out.report.dropped.len(), 1);
    assert_eq!(out.report.dropped[0].position, 4);
    assert!(validate_document(&out.document).is_valid());
}

#[test]
fn canonical_documents_round_trip_through_the_pipeline_loader() {
    let doc = load("annual_report");
    let value = serde_json::to_value(&doc).unwrap();
    let (again, report) = rules_pipeline().load_document(&value).unwrap();
    assert_eq!(again, doc);
    assert!(report.is_none());
}

#[test]
fn fourteen_adjacent_text_pairs_give_five_candidates_and_two_rule_pairs() {
    let doc = load("text_pairs_14");
    let texts = doc.elements.iter().filter(|e| e.etype == ElementType::Text).count();
    assert_eq!(texts, 15);
    let cands = filter_text_truncation_candidates(&doc, &Filters::default());
    let got: Vec<(usize, usize)> = cands.iter().map(|c| (c.src_idx, c.tgt_idx)).collect();
    assert_eq!(got, vec![(4, 5), (7, 8), (12, 13), (17, 18), (18, 20)]);
    assert_eq!(cands[2].boundary_kind, BoundaryKind::PageBreak);
    let pairs = RulePredictor::default().text_truncation(&cands).unwrap().value.pairs;
    assert_eq!(pairs, vec![Pair { src: 7, tgt: 8 }, Pair { src: 17, tgt: 18 }]);
}

#[test]
fn handbook_titles_split_into_two_overlapping_chunks() {
    let doc = load("long_handbook");
    assert_eq!(doc.page_count, 9);
    assert_eq!(filter_titles(&doc).items.len(), 23);
    assert_eq!(doc.page_counts(ElementType::Title), vec![4, 2, 3, 1, 3, 2, 4, 2, 2]);
    let pipeline = rules_pipeline();
    let mut plans = pipeline.plan(&doc).unwrap();
    // Window [6, 10] clipped to page 8: counts 4, 2, 2, so page 6 wins.
    assert_eq!(plans.title.boundaries, vec![0, 6]);
    let ranges: Vec<(usize, usize)> = plans.title.chunks.iter().map(|c| (c.start, c.end)).collect();
    assert_eq!(ranges, vec![(0, 7), (5, 8)]);
    let (ann, _, _) = pipeline.predict(&doc, &mut plans).unwrap();
    assert_eq!(ann.levels(), gold(&golden_root().join("long_handbook")).levels());
}

#[test]
fn table_candidates_across_the_corpus() {
    let found: Vec<(String, usize, usize)> = golden_docs()
        .into_iter()
        .flat_map(|(name, _)| {
            let doc = load(&name);
            filter_table_truncation_candidates(&doc, &Filters::default())
                .candidates
                .into_iter()
                .map(move |c| (name.clone(), c.upper_idx, c.lower_idx))
        })
        .collect();
    let names: Vec<&str> = found.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        vec!["annual_report", "cjk_policy", "financial_tables", "financial_tables", "lab_manual", "product_sheet"]
    );
}
