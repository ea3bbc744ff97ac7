//! Offline metrics: hierarchy TEDS, pair precision/recall, table merge
//! accuracy and evidence-box overlap.

mod bbox;
mod metrics;
mod teds;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::Annotations;
use crate::error::ErrorCode;

pub use bbox::{bbox_scores, union_areas, BBoxScores};
pub use metrics::{judgement_units, merge_accuracy, pair_prf, MergeAccuracy, Prf};
pub use teds::{
    normalize_label, teds, tree_edit_distance, tree_edit_distance_post, LabeledTree, PostTree, TedWorkspace,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

impl ErrorCode for EvalError {
    fn code(&self) -> &'static str {
        "eval.SchemaMismatch"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub id: String,
    pub scores: BBoxScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEval {
    pub doc_id: String,
    pub teds: f64,
    pub text_truncation: Prf,
    pub association: Prf,
    pub table_truncation: MergeAccuracy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<QueryScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub documents: usize,
    pub mean_teds: Option<f64>,
    /// Micro-averaged over all documents.
    pub text_truncation: Prf,
    pub association: Prf,
    pub table_truncation: MergeAccuracy,
    pub mean_bbox_recall: Option<f64>,
    pub mean_bbox_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: Vec<DocEval>,
    pub summary: EvalSummary,
}

/// Title-hierarchy tree of an annotation set. Labels come from the entry's
/// own `content`, else from `fallback_labels`, else `#idx`.
pub fn hierarchy_tree(ann: &Annotations, fallback_labels: &BTreeMap<usize, String>) -> LabeledTree {
    let mut entries: Vec<_> = ann.hierarchy.iter().filter(|h| h.level >= 1).collect();
    entries.sort_by_key(|h| h.idx);
    let items: Vec<(String, u32)> = entries
        .iter()
        .map(|h| {
            let label = h
                .content
                .clone()
                .or_else(|| fallback_labels.get(&h.idx).cloned())
                .unwrap_or_else(|| format!("#{}", h.idx));
            (label, h.level as u32)
        })
        .collect();
    LabeledTree::from_levels(&items)
}

fn labels_of(ann: &Annotations) -> BTreeMap<usize, String> {
    ann.hierarchy.iter().filter_map(|h| Some((h.idx, h.content.clone()?))).collect()
}

pub fn evaluate_document(pred: &Annotations, gold: &Annotations) -> Result<DocEval, EvalError> {
    if pred.doc_id != gold.doc_id {
        return Err(EvalError::SchemaMismatch(format!(
            "prediction for `{}` compared with gold for `{}`",
            pred.doc_id, gold.doc_id
        )));
    }
    let (pl, gl) = (labels_of(pred), labels_of(gold));
    let teds = teds(&hierarchy_tree(pred, &gl), &hierarchy_tree(gold, &pl));

    // Align table judgements by (upper, lower); an absent entry means "not
    // a continuation".
    let pj: BTreeMap<(usize, usize), &Vec<u8>> =
        pred.table_truncation.iter().map(|t| ((t.upper, t.lower), &t.judgement)).collect();
    let gj: BTreeMap<(usize, usize), &Vec<u8>> =
        gold.table_truncation.iter().map(|t| ((t.upper, t.lower), &t.judgement)).collect();
    let keys: BTreeSet<(usize, usize)> = pj.keys().chain(gj.keys()).copied().collect();
    let empty = Vec::new();
    let preds: Vec<Vec<u8>> = keys.iter().map(|k| pj.get(k).copied().unwrap_or(&empty).clone()).collect();
    let golds: Vec<Vec<u8>> = keys.iter().map(|k| gj.get(k).copied().unwrap_or(&empty).clone()).collect();

    let retrieved: BTreeMap<&str, _> = pred.evidence.iter().map(|q| (q.id.as_str(), &q.boxes)).collect();
    let evidence = gold
        .evidence
        .iter()
        .map(|q| QueryScore {
            id: q.id.clone(),
            scores: bbox_scores(retrieved.get(q.id.as_str()).map_or(&[][..], |b| b.as_slice()), &q.boxes),
        })
        .collect();

    Ok(DocEval {
        doc_id: gold.doc_id.clone(),
        teds,
        text_truncation: pair_prf(&pred.text_truncation, &gold.text_truncation),
        association: pair_prf(&pred.association, &gold.association),
        table_truncation: merge_accuracy(&preds, &golds),
        evidence,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(documents: Vec<DocEval>) -> EvalReport {
    let micro = |f: fn(&DocEval) -> &Prf| {
        let (tp, p, g) = documents
            .iter()
            .map(f)
            .fold((0, 0, 0), |(a, b, c), x| (a + x.true_positives, b + x.predicted, c + x.gold));
        Prf::from_counts(tp, p, g)
    };
    let table = documents.iter().map(|d| &d.table_truncation).fold(merge_accuracy(&[], &[]), |acc, m| {
        MergeAccuracy {
            units_correct: acc.units_correct + m.units_correct,
            units_total: acc.units_total + m.units_total,
            pairs_correct: acc.pairs_correct + m.pairs_correct,
            pairs_total: acc.pairs_total + m.pairs_total,
            columns_correct: acc.columns_correct + m.columns_correct,
            columns_total: acc.columns_total + m.columns_total,
            ..acc
        }
        .finish()
    });
    let queries = || documents.iter().flat_map(|d| d.evidence.iter());
    let summary = EvalSummary {
        documents: documents.len(),
        mean_teds: mean(documents.iter().map(|d| d.teds)),
        text_truncation: micro(|d| &d.text_truncation),
        association: micro(|d| &d.association),
        table_truncation: table,
        mean_bbox_recall: mean(queries().filter_map(|q| q.scores.recall)),
        mean_bbox_iou: mean(queries().filter_map(|q| q.scores.iou)),
    };
    EvalReport { documents, summary }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

impl EvalReport {
    /// Plain-text table, one row per document plus a total row.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7}",
            "document", "TEDS", "txt-P", "txt-R", "asc-P", "asc-R", "tbl-acc", "bbox-R"
        );
        let row = |s: &mut String, name: &str, teds: Option<f64>, t: &Prf, a: &Prf, m: &MergeAccuracy, b: Option<f64>| {
            let _ = writeln!(
                s,
                "{:<24} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7}",
                name,
                pct(teds),
                pct(Some(t.precision)),
                pct(Some(t.recall)),
                pct(Some(a.precision)),
                pct(Some(a.recall)),
                pct(m.per_unit),
                pct(b)
            );
        };
        for d in &self.documents {
            let b = mean(d.evidence.iter().filter_map(|q| q.scores.recall));
            row(&mut s, &d.doc_id, Some(d.teds), &d.text_truncation, &d.association, &d.table_truncation, b);
        }
        let t = &self.summary;
        row(&mut s, "ALL", t.mean_teds, &t.text_truncation, &t.association, &t.table_truncation, t.mean_bbox_recall);
        s
    }
}
