use serde::{Deserialize, Serialize};

use crate::geometry::GridSpec;
use crate::vectorize::MapElement;

use super::chamfer::chamfer_one_way;
use super::raster::{element_cells, sparse_iou};

/// True-positive rule and rasterization settings for instance matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchCriteria {
    /// A match needs Chamfer distance strictly below this (m).
    pub cd_thresh: f64,
    /// A match needs instance IoU strictly above this.
    pub iou_thresh: f64,
    pub sample_step: f64,
    pub line_width: f64,
}

impl Default for MatchCriteria {
    fn default() -> Self {
        Self {
            cd_thresh: 1.0,
            iou_thresh: 0.1,
            sample_step: 0.1,
            line_width: 0.2,
        }
    }
}

/// Precision and recall after each ranked prediction.
pub fn precision_recall(hits: &[bool], n_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    hits.iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += hit as usize;
            (tp as f64 / (i + 1) as f64, tp as f64 / n_gt as f64)
        })
        .collect()
}

/// Mean over recall levels 0.1..=1.0 of the best precision reached at that
/// recall or beyond; unreached levels contribute 0.
pub fn interpolated_ap(curve: &[(f64, f64)]) -> f64 {
    (1..=10)
        .map(|i| {
            let r = i as f64 / 10.0;
            curve
                .iter()
                .filter(|(_, recall)| *recall >= r - 1e-12)
                .map(|(p, _)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 10.0
}

/// Greedy confidence-ordered matching; returns a hit flag per prediction in
/// ranked order.
///
/// Each prediction takes the unmatched ground truth of its class with the
/// smallest Chamfer distance among those passing both thresholds.
pub fn match_instances(preds: &[MapElement], gts: &[MapElement], spec: &GridSpec, c: &MatchCriteria) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence).then(a.cmp(&b)));
    let gt_cells: Vec<Vec<usize>> = gts.iter().map(|g| element_cells(g, spec, c.line_width)).collect();
    let gt_curves: Vec<Vec<[f64; 2]>> = gts.iter().map(|g| g.geometry.curve()).collect();
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let p = &preds[i];
            let cells = element_cells(p, spec, c.line_width);
            let curve = p.geometry.curve();
            let best = (0..gts.len())
                .filter(|&g| !taken[g] && gts[g].class == p.class)
                .filter_map(|g| {
                    let cd = chamfer_one_way(&curve, &gt_curves[g], c.sample_step).ok()?;
                    (cd < c.cd_thresh && sparse_iou(&cells, &gt_cells[g]) > c.iou_thresh).then_some((cd, g))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, g)) = best {
                taken[g] = true;
            }
            best.is_some()
        })
        .collect()
}

/// Average precision of `preds` against `gts`; `None` without ground truth.
pub fn average_precision(preds: &[MapElement], gts: &[MapElement], spec: &GridSpec, c: &MatchCriteria) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let hits = match_instances(preds, gts, spec, c);
    Some(interpolated_ap(&precision_recall(&hits, gts.len())))
}
