//! Density-driven overlapping page chunks and cross-chunk synchronization.
//!
//! Boundaries start at page 0; each next boundary is the page with the most
//! task elements inside `[prev + s - t, prev + s + t]` (smallest page on
//! ties). Chunk `i` spans `(max(0, b_i - 1), min(b_{i+1} + 1, p_max))`, so
//! neighbouring chunks share the three pages around each interior boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::ElementType;
use crate::error::ErrorCode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("bad chunk config: stride {stride}, threshold {threshold} (need stride >= 1 and threshold < stride)")]
    BadConfig { stride: usize, threshold: usize },
    #[error("document has no pages")]
    NoPages,
}

impl ErrorCode for ChunkError {
    fn code(&self) -> &'static str {
        match self {
            ChunkError::BadConfig { .. } => "chunking.BadConfig",
            ChunkError::NoPages => "chunking.NoPages",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkPlanConfig {
    pub stride: usize,
    pub threshold: usize,
    pub task_type: ElementType,
}

impl ChunkPlanConfig {
    pub fn new(stride: usize, threshold: usize, task_type: ElementType) -> Result<Self, ChunkError> {
        let cfg = ChunkPlanConfig { stride, threshold, task_type };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ChunkError> {
        if self.stride == 0 || self.threshold >= self.stride {
            return Err(ChunkError::BadConfig { stride: self.stride, threshold: self.threshold });
        }
        Ok(())
    }
}

/// Per-page count of the task-driving element type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageProfile {
    pub counts: Vec<usize>,
}

/// Inclusive page range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRange {
    pub start: usize,
    pub end: usize,
}

impl PageRange {
    pub fn contains(&self, page: usize) -> bool {
        self.start <= page && page <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub boundaries: Vec<usize>,
    pub chunks: Vec<PageRange>,
    /// Realized overlap width (pages) between consecutive chunks.
    pub overlaps: Vec<usize>,
}

impl ChunkPlan {
    pub fn single(p_max: usize) -> ChunkPlan {
        ChunkPlan { boundaries: vec![0], chunks: vec![PageRange { start: 0, end: p_max }], overlaps: vec![] }
    }
}

pub fn compute_boundaries(profile: &PageProfile, cfg: &ChunkPlanConfig) -> Result<Vec<usize>, ChunkError> {
    cfg.check()?;
    let p_max = profile.counts.len().checked_sub(1).ok_or(ChunkError::NoPages)?;
    let mut boundaries = vec![0];
    loop {
        let prev = *boundaries.last().expect("seeded with 0");
        let lo = prev + cfg.stride - cfg.threshold;
        if lo > p_max {
            break;
        }
        let hi = (prev + cfg.stride + cfg.threshold).min(p_max);
        // max_by_key keeps the last maximum; reverse so the smallest page wins.
        let best = (lo..=hi)
            .rev()
            .max_by_key(|&p| profile.counts[p])
            .expect("window is non-empty");
        boundaries.push(best);
    }
    Ok(boundaries)
}

pub fn build_chunks(boundaries: &[usize], p_max: usize) -> Vec<PageRange> {
    boundaries
        .iter()
        .enumerate()
        .map(|(i, &b)| PageRange {
            start: b.saturating_sub(1),
            end: boundaries.get(i + 1).map_or(p_max, |&next| (next + 1).min(p_max)),
        })
        .collect()
}

pub fn plan_chunks(profile: &PageProfile, cfg: &ChunkPlanConfig) -> Result<ChunkPlan, ChunkError> {
    let boundaries = compute_boundaries(profile, cfg)?;
    let p_max = profile.counts.len() - 1;
    let chunks = build_chunks(&boundaries, p_max);
    let overlaps = chunks
        .windows(2)
        .map(|w| (w[0].end.min(w[1].end) + 1).saturating_sub(w[0].start.max(w[1].start)))
        .collect();
    Ok(ChunkPlan { boundaries, chunks, overlaps })
}

/// A per-chunk subtask result, keyed by its position in the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPrediction<T> {
    pub chunk_index: usize,
    pub payload: T,
}

/// Title levels predicted for one chunk (idx -> level, -1 = not a title).
pub type ChunkLevels = ChunkPrediction<BTreeMap<usize, i64>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncOutcome {
    pub levels: BTreeMap<usize, i64>,
    /// Shift applied to each chunk, in chunk order (anchor = 0).
    pub deviations: Vec<i64>,
    /// Chunks that shared no titles with their predecessor.
    pub empty_overlaps: Vec<usize>,
}

/// Calibrate chunk-local title levels onto the first chunk's scale.
///
/// Each chunk is shifted by the rounded mean of calibrated previous level
/// minus raw level over titles it shares with the previous chunk. Earlier
/// chunks win on shared titles; `-1` passes through unshifted; all other
/// levels are clamped to at least 1.
pub fn synchronize_hierarchy(chunks: &[ChunkLevels]) -> SyncOutcome {
    let mut ordered: Vec<&ChunkLevels> = chunks.iter().collect();
    ordered.sort_by_key(|c| c.chunk_index);

    let mut out = SyncOutcome::default();
    let Some((anchor, rest)) = ordered.split_first() else { return out };
    out.levels = anchor.payload.clone();
    out.deviations.push(0);

    let mut prev_ids: Vec<usize> = anchor.payload.keys().copied().collect();
    for chunk in rest {
        let (sum, n) = prev_ids
            .iter()
            .filter_map(|idx| {
                let earlier = *out.levels.get(idx)?;
                let raw = *chunk.payload.get(idx)?;
                (earlier != -1 && raw != -1).then_some(earlier - raw)
            })
            .fold((0i64, 0i64), |(s, n), d| (s + d, n + 1));
        let deviation = if n == 0 {
            out.empty_overlaps.push(chunk.chunk_index);
            0
        } else {
            round_half_away(sum, n)
        };
        out.deviations.push(deviation);
        for (&idx, &raw) in &chunk.payload {
            let calibrated = if raw == -1 { -1 } else { (raw + deviation).max(1) };
            out.levels.entry(idx).or_insert(calibrated);
        }
        prev_ids = chunk.payload.keys().copied().collect();
    }
    out
}

/// `sum / n` rounded half away from zero, exactly.
fn round_half_away(sum: i64, n: i64) -> i64 {
    debug_assert!(n > 0);
    if sum >= 0 {
        (2 * sum + n) / (2 * n)
    } else {
        -((-2 * sum + n) / (2 * n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionConflict<K, V> {
    pub key: K,
    pub kept: V,
    pub rejected: V,
    pub chunk_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnionOutcome<K, V> {
    pub merged: BTreeMap<K, V>,
    pub conflicts: Vec<UnionConflict<K, V>>,
}

/// Union keyed chunk results; on a key collision with a different value the
/// earlier chunk wins and the collision is reported.
pub fn merge_keyed<K, V>(chunks: Vec<ChunkPrediction<Vec<(K, V)>>>) -> UnionOutcome<K, V>
where
    K: Ord + Clone,
    V: PartialEq + Clone,
{
    let mut chunks = chunks;
    chunks.sort_by_key(|c| c.chunk_index);
    let mut merged: BTreeMap<K, V> = BTreeMap::new();
    let mut conflicts = Vec::new();
    for chunk in chunks {
        for (k, v) in chunk.payload {
            match merged.get(&k) {
                None => {
                    merged.insert(k, v);
                }
                Some(kept) if *kept == v => {}
                Some(kept) => conflicts.push(UnionConflict {
                    key: k,
                    kept: kept.clone(),
                    rejected: v,
                    chunk_index: chunk.chunk_index,
                }),
            }
        }
    }
    UnionOutcome { merged, conflicts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairUnion {
    /// Plain set union (text truncation).
    Set,
    /// At most one target per source (association).
    UniqueSource,
}

/// Pairs kept by [`merge_union`] and the conflicts it resolved.
pub type UnionResult = (Vec<(usize, usize)>, Vec<UnionConflict<usize, usize>>);

/// Union of `(src, tgt)` pair sets across chunks.
pub fn merge_union(chunks: Vec<ChunkPrediction<Vec<(usize, usize)>>>, mode: PairUnion) -> UnionResult {
    match mode {
        PairUnion::Set => {
            let keyed = chunks
                .into_iter()
                .map(|c| ChunkPrediction {
                    chunk_index: c.chunk_index,
                    payload: c.payload.into_iter().map(|p| (p, ())).collect(),
                })
                .collect();
            let out = merge_keyed::<(usize, usize), ()>(keyed);
            (out.merged.into_keys().collect(), Vec::new())
        }
        PairUnion::UniqueSource => {
            let out = merge_keyed(chunks);
            (out.merged.into_iter().collect(), out.conflicts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(s: usize, t: usize) -> ChunkPlanConfig {
        ChunkPlanConfig::new(s, t, ElementType::Title).unwrap()
    }

    #[test]
    fn short_document_is_one_chunk() {
        let profile = PageProfile { counts: vec![1, 2, 0, 1] };
        assert_eq!(compute_boundaries(&profile, &cfg(8, 2)).unwrap(), vec![0]);
        assert_eq!(build_chunks(&[0], 3), vec![PageRange { start: 0, end: 3 }]);
    }

    #[test]
    fn worked_boundary_example() {
        let profile = PageProfile { counts: vec![3, 1, 0, 2, 4, 1, 2, 5, 1, 0, 2, 1] };
        assert_eq!(compute_boundaries(&profile, &cfg(5, 1)).unwrap(), vec![0, 4, 10]);
        let plan = plan_chunks(&profile, &cfg(5, 1)).unwrap();
        assert_eq!(
            plan.chunks,
            vec![
                PageRange { start: 0, end: 5 },
                PageRange { start: 3, end: 11 },
                PageRange { start: 9, end: 11 }
            ]
        );
        assert_eq!(plan.overlaps[0], 3);
    }

    #[test]
    fn zero_counts_pick_window_start() {
        let profile = PageProfile { counts: vec![0; 12] };
        assert_eq!(compute_boundaries(&profile, &cfg(5, 2)).unwrap(), vec![0, 3, 6, 9]);
    }

    #[test]
    fn chunks_clip_at_document_end() {
        assert_eq!(
            build_chunks(&[0, 5], 5),
            vec![PageRange { start: 0, end: 5 }, PageRange { start: 4, end: 5 }]
        );
    }

    #[test]
    fn bad_config() {
        assert!(ChunkPlanConfig::new(3, 3, ElementType::Title).is_err());
        assert!(ChunkPlanConfig::new(0, 0, ElementType::Title).is_err());
        let bad = ChunkPlanConfig { stride: 2, threshold: 5, task_type: ElementType::Title };
        assert!(matches!(
            compute_boundaries(&PageProfile { counts: vec![0; 3] }, &bad),
            Err(ChunkError::BadConfig { .. })
        ));
        assert_eq!(compute_boundaries(&PageProfile { counts: vec![] }, &cfg(2, 1)), Err(ChunkError::NoPages));
    }

    fn levels(chunk_index: usize, pairs: &[(usize, i64)]) -> ChunkLevels {
        ChunkPrediction { chunk_index, payload: pairs.iter().copied().collect() }
    }

    #[test]
    fn anchor_passthrough() {
        let out = synchronize_hierarchy(&[levels(0, &[(1, 1), (2, 2)])]);
        assert_eq!(out.levels, [(1, 1), (2, 2)].into_iter().collect());
    }

    #[test]
    fn worked_deviation_example() {
        // a=10, b=11, c=12
        let out = synchronize_hierarchy(&[
            levels(0, &[(10, 2), (11, 3)]),
            levels(1, &[(10, 1), (11, 2), (12, 2)]),
        ]);
        assert_eq!(out.deviations, vec![0, 1]);
        assert_eq!(out.levels, [(10, 2), (11, 3), (12, 3)].into_iter().collect());
    }

    #[test]
    fn zero_deviation_and_empty_overlap() {
        let out = synchronize_hierarchy(&[levels(0, &[(10, 2)]), levels(1, &[(10, 2), (13, 3)])]);
        assert_eq!(out.levels, [(10, 2), (13, 3)].into_iter().collect());

        let out = synchronize_hierarchy(&[levels(0, &[(1, 1)]), levels(1, &[(5, 2)])]);
        assert_eq!(out.empty_overlaps, vec![1]);
        assert_eq!(out.levels[&5], 2);
    }

    #[test]
    fn demotions_pass_through_and_clamp() {
        let out = synchronize_hierarchy(&[
            levels(0, &[(1, 1), (2, 1)]),
            levels(1, &[(1, 3), (2, 3), (3, -1), (4, 1)]),
        ]);
        assert_eq!(out.deviations[1], -2);
        assert_eq!(out.levels[&3], -1);
        assert_eq!(out.levels[&4], 1);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_half_away(1, 2), 1);
        assert_eq!(round_half_away(-1, 2), -1);
        assert_eq!(round_half_away(1, 3), 0);
        assert_eq!(round_half_away(-5, 3), -2);
        assert_eq!(round_half_away(4, 2), 2);
    }

    #[test]
    fn completion_order_does_not_matter() {
        let a = levels(0, &[(1, 1), (2, 2)]);
        let b = levels(1, &[(2, 1), (3, 2)]);
        assert_eq!(synchronize_hierarchy(&[a.clone(), b.clone()]), synchronize_hierarchy(&[b, a]));
    }

    fn pairs(chunk_index: usize, p: &[(usize, usize)]) -> ChunkPrediction<Vec<(usize, usize)>> {
        ChunkPrediction { chunk_index, payload: p.to_vec() }
    }

    #[test]
    fn union_examples() {
        let (p, _) = merge_union(vec![pairs(0, &[(7, 8)]), pairs(1, &[(7, 8)])], PairUnion::Set);
        assert_eq!(p, vec![(7, 8)]);
        let (p, _) = merge_union(vec![pairs(0, &[(7, 8)]), pairs(1, &[(20, 21)])], PairUnion::Set);
        assert_eq!(p, vec![(7, 8), (20, 21)]);
        let (p, c) = merge_union(vec![pairs(1, &[(12, 6)]), pairs(0, &[(12, 5)])], PairUnion::UniqueSource);
        assert_eq!(p, vec![(12, 5)]);
        assert_eq!(c, vec![UnionConflict { key: 12, kept: 5, rejected: 6, chunk_index: 1 }]);
    }
}
