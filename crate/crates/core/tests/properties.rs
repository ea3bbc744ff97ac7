//! Property suites over generated inputs: synchronization shift
//! invariance, TEDS symmetry, exporter round trips and content
//! conservation under arbitrary (well-formed) annotations.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use common::*;
use docpost_core::annotations::{Annotations, HierarchyEntry, TableJudgement};
use docpost_core::apply::apply;
use docpost_core::chunk::{synchronize_hierarchy, ChunkPrediction};
use docpost_core::element::{BBox, CanonicalDocument, CanonicalElement, CoordUnit, ElementType};
use docpost_core::eval::{teds, LabeledTree};
use docpost_core::export::{export_json, export_markdown, import_json};
use docpost_core::predict::Pair;
use docpost_core::tree::{build_tree, check_tree, chunk_nodes};

const KINDS: [ElementType; 8] = [
    ElementType::Title,
    ElementType::Text,
    ElementType::Text,
    ElementType::Table,
    ElementType::Image,
    ElementType::ImageCaption,
    ElementType::TableCaption,
    ElementType::PageFooter,
];

fn table_html(cols: usize, rows: &[String]) -> String {
    let mut s = String::from("<table>");
    for r in rows {
        s.push_str("<tr>");
        for c in 0..cols {
            s.push_str(&format!("<td>{}</td>", r.chars().skip(c).take(4).collect::<String>().replace('<', "&lt;")));
        }
        s.push_str("</tr>");
    }
    s.push_str("</table>");
    s
}

/// Element kind, page step, text, table columns.
fn element_spec() -> impl Strategy<Value = (usize, usize, String, usize)> {
    (0..KINDS.len(), 0..2usize, "[a-zA-Z0-9 ,.\\-#*_|`一二三<>&]{0,60}", 1..4usize)
}

fn document(specs: Vec<(usize, usize, String, usize)>) -> CanonicalDocument {
    let mut page = 0;
    let mut y = 0.0;
    let elements = specs
        .into_iter()
        .enumerate()
        .map(|(idx, (k, step, text, cols))| {
            if step == 1 {
                page += 1;
                y = 0.0;
            }
            y += 10.0;
            let etype = KINDS[k];
            let rows = vec![text.clone(), text.chars().rev().collect()];
            CanonicalElement {
                idx,
                etype,
                content: if etype == ElementType::Table || etype == ElementType::Image { String::new() } else { text },
                page,
                bbox: BBox::new(100.0, y, 900.0, y + 8.0),
                table_html: (etype == ElementType::Table).then(|| table_html(cols, &rows)),
                asset_ref: (etype == ElementType::Image).then(|| format!("img/{idx}.png")),
            }
        })
        .collect();
    CanonicalDocument {
        doc_id: "generated".into(),
        page_count: page + 1,
        coord_unit: CoordUnit::Pixel,
        elements,
        source_schema: "canonical".into(),
    }
}

/// Annotations that respect the structural preconditions: text pairs on
/// consecutive text blocks, table judgements on consecutive tables.
fn annotations(doc: &CanonicalDocument, picks: &[u8]) -> Annotations {
    let mut ann = Annotations::empty(&doc.doc_id);
    let pick = |i: usize| picks.get(i % picks.len().max(1)).copied().unwrap_or(0);
    let texts: Vec<usize> = doc.elements.iter().filter(|e| e.etype == ElementType::Text).map(|e| e.idx).collect();
    for (i, w) in texts.windows(2).enumerate() {
        if pick(i) % 3 == 0 {
            ann.text_truncation.push(Pair { src: w[0], tgt: w[1] });
        }
    }
    let tables: Vec<&CanonicalElement> = doc.elements.iter().filter(|e| e.etype == ElementType::Table).collect();
    for (i, w) in tables.windows(2).enumerate() {
        let cols = w[0].table_html.as_deref().unwrap().matches("<td>").count() / 2;
        let judgement = match pick(i + 7) % 3 {
            0 => Vec::new(),
            1 => vec![0; cols],
            _ => (0..cols).map(|c| pick(c) % 2).collect(),
        };
        ann.table_truncation.push(TableJudgement { upper: w[0].idx, lower: w[1].idx, judgement });
    }
    for (i, e) in doc.elements.iter().filter(|e| e.etype == ElementType::Title).enumerate() {
        let level = if pick(i + 3) % 7 == 0 { -1 } else { 1 + (pick(i) % 4) as i64 };
        ann.hierarchy.push(HierarchyEntry { idx: e.idx, level, content: None });
    }
    ann
}

fn tree_from_levels(levels: &[u32]) -> LabeledTree {
    let items: Vec<(String, u32)> = levels.iter().enumerate().map(|(i, l)| (format!("t{}", i % 3), *l)).collect();
    LabeledTree::from_levels(&items)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, ..ProptestConfig::default() })]

    #[test]
    fn sync_is_invariant_to_shifting_a_later_chunk(
        levels in prop::collection::vec(1i64..6, 6..30),
        cut in 2usize..5,
        shift in -2i64..4,
    ) {
        let n = levels.len();
        let mid = n / 2;
        let first: BTreeMap<usize, i64> = (0..(mid + cut).min(n)).map(|i| (i, levels[i])).collect();
        let second: BTreeMap<usize, i64> = (mid.saturating_sub(cut)..n).map(|i| (i, levels[i] + 3)).collect();
        let shifted: BTreeMap<usize, i64> = second.iter().map(|(&i, &l)| (i, l + shift)).collect();
        let a = synchronize_hierarchy(&[
            ChunkPrediction { chunk_index: 0, payload: first.clone() },
            ChunkPrediction { chunk_index: 1, payload: second },
        ]);
        let b = synchronize_hierarchy(&[
            ChunkPrediction { chunk_index: 0, payload: first },
            ChunkPrediction { chunk_index: 1, payload: shifted },
        ]);
        prop_assert_eq!(&a.levels, &b.levels);
        prop_assert_eq!(a.deviations[1] - shift, b.deviations[1]);
        let want: BTreeMap<usize, i64> = levels.iter().copied().enumerate().collect();
        prop_assert_eq!(a.levels, want);
    }

    #[test]
    fn teds_is_symmetric_and_bounded(a in prop::collection::vec(1u32..5, 0..12), b in prop::collection::vec(1u32..5, 0..12)) {
        let (ta, tb) = (tree_from_levels(&a), tree_from_levels(&b));
        let ab = teds(&ta, &tb);
        prop_assert_eq!(ab, teds(&tb, &ta));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(teds(&ta, &ta), 1.0);
    }

    #[test]
    fn arbitrary_documents_process_and_export(specs in prop::collection::vec(element_spec(), 0..40), picks in prop::collection::vec(any::<u8>(), 1..16)) {
        let doc = document(specs);
        let value = serde_json::to_value(&doc).unwrap();
        let pipeline = rules_pipeline();
        let out = pipeline.process(&value).unwrap();
        prop_assert!(conservation_violations(&doc, &out.resolved).is_empty());
        prop_assert!(check_tree(&out.tree, &out.resolved).is_empty());
        let json = export_json(&out.tree);
        let back = import_json(&json).unwrap();
        prop_assert_eq!(&back, &out.tree);
        prop_assert_eq!(export_json(&back), json);
        let md = export_markdown(&out.tree);
        prop_assert!(md.ends_with('\n'));

        // Arbitrary well-formed annotations either apply with content
        // conserved or are rejected with an error, never anything else.
        let ann = annotations(&doc, &picks);
        if let Ok(res) = apply(&doc, &ann) {
            let v = conservation_violations(&doc, &res);
            prop_assert!(v.is_empty(), "{:?}", v);
            let mut tree = build_tree(&res);
            chunk_nodes(&mut tree, 40);
            prop_assert!(check_tree(&tree, &res).is_empty());
            let _ = export_markdown(&tree);
        }
    }
}
