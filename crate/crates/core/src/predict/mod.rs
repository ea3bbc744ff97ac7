//! Subtask predictors.
//!
//! A [`Predictor`] answers the four subtasks on filtered inputs. The rule
//! baseline needs no backend; the remote predictor talks to a JSON service
//! and validates every response before it is used.

mod remote;
mod rules;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ErrorCode, Flag};
use crate::filter::{AssocItem, TablePairCandidate, TextPairCandidate, TitleItem};

pub(crate) use remote::unwrap_reply;
pub use remote::{HttpTransport, RemoteConfig, RemotePredictor, Transport, TransportError};
pub use rules::{classify_numbering, Numbering, RulePredictor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl ErrorCode for PredictError {
    fn code(&self) -> &'static str {
        match self {
            PredictError::BackendUnavailable(_) => "predict.BackendUnavailable",
            PredictError::MalformedResponse(_) => "predict.MalformedResponse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelItem {
    pub idx: usize,
    /// Level >= 1, or -1 when the block is not a real title.
    pub level: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyPrediction {
    pub items: Vec<LevelItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub src: usize,
    pub tgt: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub pairs: Vec<Pair>,
}

/// Table continuation verdict. An empty `columns` means the lower table is
/// not a continuation; otherwise one 0/1 per column, 1 meaning the boundary
/// cells of that column are fragments of one cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMergeJudgement {
    pub columns: Vec<u8>,
}

impl CellMergeJudgement {
    pub fn is_continuation(&self) -> bool {
        !self.columns.is_empty()
    }
}

/// A prediction plus the flags raised while producing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicted<T> {
    pub value: T,
    pub flags: Vec<Flag>,
}

impl<T> Predicted<T> {
    pub fn clean(value: T) -> Self {
        Predicted { value, flags: Vec::new() }
    }
}

pub type PredictResult<T> = Result<Predicted<T>, PredictError>;

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn title_hierarchy(&self, titles: &[TitleItem]) -> PredictResult<HierarchyPrediction>;
    fn text_truncation(&self, candidates: &[TextPairCandidate]) -> PredictResult<PairPrediction>;
    fn association(&self, items: &[AssocItem]) -> PredictResult<PairPrediction>;
    fn table_truncation(&self, pair: &TablePairCandidate) -> PredictResult<CellMergeJudgement>;
}

/// Runs `primary`, degrading to `fallback` with a warning when it fails.
pub struct WithFallback<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Predictor, F: Predictor> WithFallback<P, F> {
    fn run<T>(
        &self,
        task: &str,
        primary: impl FnOnce(&P) -> PredictResult<T>,
        fallback: impl FnOnce(&F) -> PredictResult<T>,
    ) -> PredictResult<T> {
        match primary(&self.primary) {
            Ok(p) => Ok(p),
            Err(err) => {
                log::warn!("{task}: {err}; using {}", self.fallback.name());
                let mut out = fallback(&self.fallback)?;
                out.flags.insert(0, Flag::warning("predict.Fallback", format!("{task}: {} ({err})", err.code())));
                Ok(out)
            }
        }
    }
}

impl<P: Predictor, F: Predictor> Predictor for WithFallback<P, F> {
    fn name(&self) -> &str {
        self.primary.name()
    }

    fn title_hierarchy(&self, titles: &[TitleItem]) -> PredictResult<HierarchyPrediction> {
        self.run("title_hierarchy", |p| p.title_hierarchy(titles), |f| f.title_hierarchy(titles))
    }

    fn text_truncation(&self, candidates: &[TextPairCandidate]) -> PredictResult<PairPrediction> {
        self.run("text_truncation", |p| p.text_truncation(candidates), |f| f.text_truncation(candidates))
    }

    fn association(&self, items: &[AssocItem]) -> PredictResult<PairPrediction> {
        self.run("association", |p| p.association(items), |f| f.association(items))
    }

    fn table_truncation(&self, pair: &TablePairCandidate) -> PredictResult<CellMergeJudgement> {
        self.run("table_truncation", |p| p.table_truncation(pair), |f| f.table_truncation(pair))
    }
}

impl<T: Predictor + ?Sized> Predictor for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn title_hierarchy(&self, titles: &[TitleItem]) -> PredictResult<HierarchyPrediction> {
        (**self).title_hierarchy(titles)
    }
    fn text_truncation(&self, candidates: &[TextPairCandidate]) -> PredictResult<PairPrediction> {
        (**self).text_truncation(candidates)
    }
    fn association(&self, items: &[AssocItem]) -> PredictResult<PairPrediction> {
        (**self).association(items)
    }
    fn table_truncation(&self, pair: &TablePairCandidate) -> PredictResult<CellMergeJudgement> {
        (**self).table_truncation(pair)
    }
}
