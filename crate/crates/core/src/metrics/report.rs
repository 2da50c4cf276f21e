use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::ElementClass;
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point3};
use crate::vectorize::{MapElement, VectorMap};

use super::ap::{average_precision, match_instances, MatchCriteria};
use super::chamfer::chamfer_one_way;
use super::density::DensityRow;
use super::raster::{iou, iou_in_region, rasterize_map, RasterMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluation raster cell (m).
    pub cell: f64,
    /// Padding around the union of both maps (m).
    pub margin: f64,
    #[serde(flatten)]
    pub matching: MatchCriteria,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cell: 0.1,
            margin: 1.0,
            matching: MatchCriteria::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.matching;
        let ok = self.cell > 0.0
            && self.margin >= 0.0
            && m.cd_thresh > 0.0
            && (0.0..1.0).contains(&m.iou_thresh)
            && m.sample_step > 0.0
            && m.line_width > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "evaluation settings out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: ElementClass,
    pub gt_count: usize,
    pub pred_count: usize,
    /// Absent when neither map has the class.
    pub iou: Option<f64>,
    /// Absent when ground truth lacks the class.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub class: ElementClass,
    /// Position in the predicted map.
    pub index: usize,
    pub confidence: f64,
    /// Chamfer distance to the closest ground-truth element of the class.
    pub chamfer: Option<f64>,
    pub matched: bool,
}

/// mIoU restricted to one ring around the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingScore {
    pub r_min: f64,
    pub r_max: f64,
    pub miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub per_class: Vec<ClassScore>,
    /// Mean IoU over classes present in ground truth.
    pub miou: Option<f64>,
    pub instances: Vec<InstanceScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density: Vec<DensityRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rings: Vec<RingScore>,
}

impl EvalReport {
    pub fn class(&self, class: ElementClass) -> Option<&ClassScore> {
        self.per_class.iter().find(|c| c.class == class)
    }

    /// Plain-text tables: per-class scores, then density and ring scores when present.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<8}{:>6}{:>6}{:>8}{:>8}", "class", "gt", "pred", "IoU", "AP");
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "{:<8}{:>6}{:>6}{:>8}{:>8}",
                c.class.short(),
                c.gt_count,
                c.pred_count,
                fmt(c.iou),
                fmt(c.ap)
            );
        }
        let _ = writeln!(s, "mIoU {}", fmt(self.miou));
        if !self.density.is_empty() {
            let _ = writeln!(
                s,
                "\n{:<12}{:>10}{:>12}{:>12}",
                "range (m)", "points", "area (m2)", "pts/m2"
            );
            for d in &self.density {
                let _ = writeln!(
                    s,
                    "{:<12}{:>10}{:>12.1}{:>12.2}",
                    format!("{}-{}", d.r_min, d.r_max),
                    d.points,
                    d.area,
                    d.density
                );
            }
        }
        if !self.rings.is_empty() {
            let _ = writeln!(s, "\n{:<12}{:>8}", "range (m)", "mIoU");
            for r in &self.rings {
                let _ = writeln!(s, "{:<12}{:>8}", format!("{}-{}", r.r_min, r.r_max), fmt(r.miou));
            }
        }
        s
    }
}

/// Grid covering both maps plus `margin`, with edges on multiples of `cell`.
pub fn evaluation_grid(pred: &VectorMap, gt: &VectorMap, cell: f64, margin: f64) -> GridSpec {
    let bbox = [pred.bbox(), gt.bbox()]
        .into_iter()
        .flatten()
        .reduce(|a, b| [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]);
    let Some(b) = bbox else {
        return GridSpec::new(0.0, 0.0, cell, 1, 1);
    };
    let x_min = ((b[0] - margin) / cell).floor() * cell;
    let y_min = ((b[1] - margin) / cell).floor() * cell;
    let cols = (((b[2] + margin - x_min) / cell).ceil() as usize).max(1);
    let rows = (((b[3] + margin - y_min) / cell).ceil() as usize).max(1);
    GridSpec::new(x_min, y_min, cell, cols, rows)
}

fn class_elements(map: &VectorMap, class: ElementClass) -> Vec<MapElement> {
    map.of_class(class).cloned().collect()
}

struct ClassRasters {
    class: ElementClass,
    pred: RasterMask,
    gt: RasterMask,
}

fn rasterize_classes(pred: &VectorMap, gt: &VectorMap, spec: &GridSpec, width: f64) -> Vec<ClassRasters> {
    ElementClass::ALL
        .par_iter()
        .map(|&class| ClassRasters {
            class,
            pred: rasterize_map(pred, class, spec, width),
            gt: rasterize_map(gt, class, spec, width),
        })
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn check_frames(pred: &VectorMap, gt: &VectorMap) -> Result<()> {
    if pred.crs_note != gt.crs_note {
        return Err(Error::FrameMismatch {
            pred: pred.crs_note.clone(),
            gt: gt.crs_note.clone(),
        });
    }
    Ok(())
}

/// Score a predicted map against ground truth.
pub fn evaluate(pred: &VectorMap, gt: &VectorMap, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    check_frames(pred, gt)?;
    let spec = evaluation_grid(pred, gt, cfg.cell, cfg.margin);
    let rasters = rasterize_classes(pred, gt, &spec, cfg.matching.line_width);

    let per_class: Vec<ClassScore> = rasters
        .par_iter()
        .map(|r| {
            let preds = class_elements(pred, r.class);
            let gts = class_elements(gt, r.class);
            let iou = if preds.is_empty() && gts.is_empty() {
                None
            } else {
                Some(iou(&r.pred, &r.gt)?)
            };
            Ok(ClassScore {
                class: r.class,
                gt_count: gts.len(),
                pred_count: preds.len(),
                iou,
                ap: average_precision(&preds, &gts, &spec, &cfg.matching),
            })
        })
        .collect::<Result<_>>()?;
    let present: Vec<f64> = per_class
        .iter()
        .filter(|c| c.gt_count > 0)
        .filter_map(|c| c.iou)
        .collect();

    let mut instances = Vec::with_capacity(pred.len());
    for class in ElementClass::ALL {
        let gts = class_elements(gt, class);
        let indexed: Vec<(usize, &MapElement)> = pred
            .elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class == class)
            .collect();
        let preds: Vec<MapElement> = indexed.iter().map(|(_, e)| (*e).clone()).collect();
        // Hits come back in ranked order; map them back to map positions.
        let mut ranked: Vec<usize> = (0..preds.len()).collect();
        ranked.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence).then(a.cmp(&b)));
        let hits = match_instances(&preds, &gts, &spec, &cfg.matching);
        let mut matched = vec![false; preds.len()];
        for (rank, &i) in ranked.iter().enumerate() {
            matched[i] = hits[rank];
        }
        let scored: Vec<InstanceScore> = indexed
            .par_iter()
            .enumerate()
            .map(|(k, (index, e))| {
                let curve = e.geometry.curve();
                let chamfer = gts
                    .iter()
                    .filter_map(|g| chamfer_one_way(&curve, &g.geometry.curve(), cfg.matching.sample_step).ok())
                    .reduce(f64::min);
                InstanceScore {
                    class,
                    index: *index,
                    confidence: e.confidence,
                    chamfer,
                    matched: matched[k],
                }
            })
            .collect();
        instances.extend(scored);
    }
    instances.sort_by_key(|s| s.index);

    Ok(EvalReport {
        per_class,
        miou: mean(&present),
        instances,
        density: Vec::new(),
        rings: Vec::new(),
    })
}

/// mIoU inside each distance ring around `origin`; a class counts in a ring
/// when its ground truth covers at least one cell there.
pub fn evaluate_rings(
    pred: &VectorMap,
    gt: &VectorMap,
    cfg: &EvalConfig,
    origin: &Point3,
    bins: &[(f64, f64)],
) -> Result<Vec<RingScore>> {
    cfg.validate()?;
    check_frames(pred, gt)?;
    let spec = evaluation_grid(pred, gt, cfg.cell, cfg.margin);
    let rasters = rasterize_classes(pred, gt, &spec, cfg.matching.line_width);
    let distance: Vec<f64> = (0..spec.len())
        .map(|i| {
            let (x, y) = spec.cell_center(i % spec.cols, i / spec.cols);
            (x - origin.x).hypot(y - origin.y)
        })
        .collect();
    bins.iter()
        .map(|&(r_min, r_max)| {
            let region: Vec<bool> = distance.iter().map(|&d| d >= r_min && d < r_max).collect();
            let mut scores = Vec::new();
            for r in &rasters {
                let gt_here = r.gt.bits.iter().zip(&region).any(|(&g, &inside)| g && inside);
                if gt_here {
                    scores.push(iou_in_region(&r.pred, &r.gt, &region)?);
                }
            }
            Ok(RingScore {
                r_min,
                r_max,
                miou: mean(&scores),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::{Geometry, DEFAULT_CRS_NOTE};

    fn sample_map() -> VectorMap {
        let mut m = VectorMap::new(DEFAULT_CRS_NOTE);
        let el = |class, geometry| MapElement {
            class,
            geometry,
            support_count: 10,
            confidence: 1.0,
        };
        m.elements.push(el(
            ElementClass::PedestrianCrossing,
            Geometry::Polygon(vec![[8.0, -7.0], [12.0, -7.0], [12.0, 7.0], [8.0, 7.0]]),
        ));
        m.elements.push(el(
            ElementClass::StopLine,
            Geometry::Polyline(vec![[14.0, -7.0], [14.0, -0.3]]),
        ));
        m.elements.push(el(
            ElementClass::LaneDivider,
            Geometry::Polyline(vec![[15.0, 0.0], [30.0, 0.0]]),
        ));
        m
    }

    #[test]
    fn perfect_prediction() {
        let gt = sample_map();
        let r = evaluate(&gt, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(r.miou, Some(1.0));
        for c in &r.per_class {
            assert_eq!(c.iou, Some(1.0));
            assert_eq!(c.ap, Some(1.0));
        }
        assert!(r.instances.iter().all(|i| i.matched && i.chamfer == Some(0.0)));
    }

    #[test]
    fn empty_prediction() {
        let gt = sample_map();
        let r = evaluate(&VectorMap::new(DEFAULT_CRS_NOTE), &gt, &EvalConfig::default()).unwrap();
        assert_eq!(r.miou, Some(0.0));
        assert!(r.per_class.iter().all(|c| c.ap == Some(0.0)));
    }

    #[test]
    fn miou_is_mean_of_present_classes() {
        let gt = sample_map();
        let mut pred = gt.clone();
        pred.elements[0].geometry = Geometry::Polygon(vec![[8.0, -7.0], [12.0, -7.0], [12.0, 0.0], [8.0, 0.0]]);
        let mut gt_no_div = gt.clone();
        gt_no_div.elements.pop();
        let r = evaluate(&pred, &gt_no_div, &EvalConfig::default()).unwrap();
        let div = r.class(ElementClass::LaneDivider).unwrap();
        assert_eq!((div.iou, div.ap), (Some(0.0), None));
        let present: Vec<f64> = r
            .per_class
            .iter()
            .filter(|c| c.gt_count > 0)
            .map(|c| c.iou.unwrap())
            .collect();
        assert_eq!(r.miou.unwrap(), present.iter().sum::<f64>() / present.len() as f64);
        assert!((r.class(ElementClass::PedestrianCrossing).unwrap().iou.unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn frames_must_agree() {
        let gt = sample_map();
        let mut other = gt.clone();
        other.crs_note = "utm".into();
        assert!(matches!(
            evaluate(&other, &gt, &EvalConfig::default()),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn grid_snaps_to_cell_multiples() {
        let g = evaluation_grid(&sample_map(), &VectorMap::default(), 0.1, 1.0);
        assert!((g.x_min - 7.0).abs() < 1e-9 && (g.y_min + 8.0).abs() < 1e-9);
        assert!(g.x_max() >= 31.0 && g.y_max() >= 8.0);
    }

    #[test]
    fn ring_scores_follow_damage() {
        let gt = sample_map();
        let mut pred = gt.clone();
        // Drop the far divider: the outer ring loses its only class.
        pred.elements.pop();
        let rings = evaluate_rings(
            &pred,
            &gt,
            &EvalConfig::default(),
            &Point3::xyz(0.0, 0.0, 0.0),
            &[(0.0, 14.9), (20.0, 40.0)],
        )
        .unwrap();
        assert_eq!(rings[0].miou, Some(1.0));
        assert_eq!(rings[1].miou, Some(0.0));
    }

    #[test]
    fn text_table_lists_classes() {
        let gt = sample_map();
        let t = evaluate(&gt, &gt, &EvalConfig::default()).unwrap().to_text();
        assert!(t.contains("Ped.") && t.contains("mIoU 1.000"));
    }
}
