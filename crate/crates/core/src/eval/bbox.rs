//! Evidence box overlap: recall and IoU over exact rectangle unions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::element::{BBox, PageBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBoxScores {
    /// `None` when the gold area is zero.
    pub recall: Option<f64>,
    /// `None` when both unions are empty.
    pub iou: Option<f64>,
    pub gold_area: f64,
    pub retrieved_area: f64,
    pub intersection_area: f64,
}

/// Areas of `∪a`, `∪b` and `∪a ∩ ∪b` by coordinate compression.
pub fn union_areas(a: &[BBox], b: &[BBox]) -> (f64, f64, f64) {
    let valid = |v: &[BBox]| v.iter().copied().filter(|r| r.x1 > r.x0 && r.y1 > r.y0).collect::<Vec<_>>();
    let (a, b) = (valid(a), valid(b));
    let mut xs: Vec<f64> = a.iter().chain(&b).flat_map(|r| [r.x0, r.x1]).collect();
    let mut ys: Vec<f64> = a.iter().chain(&b).flat_map(|r| [r.y0, r.y1]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    if xs.len() < 2 || ys.len() < 2 {
        return (0.0, 0.0, 0.0);
    }
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let cover = |rects: &[BBox]| {
        let mut grid = vec![false; nx * ny];
        for r in rects {
            let x0 = xs.partition_point(|&x| x < r.x0);
            let x1 = xs.partition_point(|&x| x < r.x1);
            let y0 = ys.partition_point(|&y| y < r.y0);
            let y1 = ys.partition_point(|&y| y < r.y1);
            for i in x0..x1 {
                for j in y0..y1 {
                    grid[i * ny + j] = true;
                }
            }
        }
        grid
    };
    let (ga, gb) = (cover(&a), cover(&b));
    let (mut ua, mut ub, mut inter) = (0.0, 0.0, 0.0);
    for i in 0..nx {
        for j in 0..ny {
            let cell = (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
            let (ia, ib) = (ga[i * ny + j], gb[i * ny + j]);
            if ia {
                ua += cell;
            }
            if ib {
                ub += cell;
            }
            if ia && ib {
                inter += cell;
            }
        }
    }
    (ua, ub, inter)
}

/// Recall `area(∪R ∩ ∪G) / area(∪G)` and IoU of the two unions, computed
/// per page and summed across pages (area-weighted).
pub fn bbox_scores(retrieved: &[PageBox], gold: &[PageBox]) -> BBoxScores {
    let pages: BTreeSet<usize> = retrieved.iter().chain(gold).map(|b| b.page).collect();
    let (mut ra, mut ga, mut ia) = (0.0, 0.0, 0.0);
    for p in pages {
        let on = |v: &[PageBox]| v.iter().filter(|b| b.page == p).map(|b| b.bbox).collect::<Vec<_>>();
        let (r, g, i) = union_areas(&on(retrieved), &on(gold));
        ra += r;
        ga += g;
        ia += i;
    }
    let union = ra + ga - ia;
    BBoxScores {
        recall: (ga > 0.0).then(|| ia / ga),
        iou: (union > 0.0).then(|| ia / union),
        gold_area: ga,
        retrieved_area: ra,
        intersection_area: ia,
    }
}
