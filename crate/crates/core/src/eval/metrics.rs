//! Pair precision/recall and table merge accuracy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::predict::Pair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Precision was defined as 1.0 because nothing was predicted.
    pub vacuous_precision: bool,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    /// Metrics from raw counts, using the empty-set conventions of
    /// [`pair_prf`].
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> Prf {
        let precision = if predicted == 0 { 1.0 } else { tp as f64 / predicted as f64 };
        let recall = if gold == 0 { 1.0 } else { tp as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 || (predicted == 0 && gold > 0) {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1, vacuous_precision: predicted == 0, true_positives: tp, predicted, gold }
    }
}

/// Set precision/recall/F1. Duplicates are ignored. An empty prediction has
/// precision 1.0 (flagged vacuous); an empty gold set has recall 1.0. When
/// nothing is predicted but gold is non-empty, F1 is 0.
pub fn pair_prf(pred: &[Pair], gold: &[Pair]) -> Prf {
    let p: BTreeSet<&Pair> = pred.iter().collect();
    let g: BTreeSet<&Pair> = gold.iter().collect();
    Prf::from_counts(p.intersection(&g).count(), p.len(), g.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeAccuracy {
    /// Continuation units plus column units (primary).
    pub per_unit: Option<f64>,
    /// Whole vectors equal.
    pub per_pair: Option<f64>,
    /// Column entries over pairs where both sides are continuations.
    pub per_column: Option<f64>,
    pub units_correct: usize,
    pub units_total: usize,
    pub pairs_correct: usize,
    pub pairs_total: usize,
    pub columns_correct: usize,
    pub columns_total: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Unit-level accounting for one aligned pair of judgement vectors:
/// `(units_correct, units_total, columns_correct, columns_total)`.
///
/// Each candidate contributes one continuation unit (empty vs non-empty).
/// When both vectors are non-empty, each gold column adds a unit; if the
/// lengths differ every column unit counts as wrong.
pub fn judgement_units(pred: &[u8], gold: &[u8]) -> (usize, usize, usize, usize) {
    let cont = usize::from(pred.is_empty() == gold.is_empty());
    if pred.is_empty() || gold.is_empty() {
        return (cont, 1, 0, 0);
    }
    let cols = if pred.len() == gold.len() { pred.iter().zip(gold).filter(|(p, g)| p == g).count() } else { 0 };
    (cont + cols, 1 + gold.len(), cols, gold.len())
}

/// Accuracy over lists aligned by candidate. Panics if the lists differ in
/// length; align them first.
pub fn merge_accuracy(preds: &[Vec<u8>], golds: &[Vec<u8>]) -> MergeAccuracy {
    assert_eq!(preds.len(), golds.len(), "merge_accuracy needs aligned lists");
    let mut m = MergeAccuracy {
        per_unit: None,
        per_pair: None,
        per_column: None,
        units_correct: 0,
        units_total: 0,
        pairs_correct: 0,
        pairs_total: preds.len(),
        columns_correct: 0,
        columns_total: 0,
    };
    for (p, g) in preds.iter().zip(golds) {
        let (uc, ut, cc, ct) = judgement_units(p, g);
        m.units_correct += uc;
        m.units_total += ut;
        m.columns_correct += cc;
        m.columns_total += ct;
        m.pairs_correct += usize::from(p == g);
    }
    m.finish()
}

impl MergeAccuracy {
    pub fn finish(mut self) -> Self {
        self.per_unit = ratio(self.units_correct, self.units_total);
        self.per_pair = ratio(self.pairs_correct, self.pairs_total);
        self.per_column = ratio(self.columns_correct, self.columns_total);
        self
    }
}
