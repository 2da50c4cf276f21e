//! Labeled points to vector map: denoise, cluster, then one polygon per
//! crossing cluster and one or more line segments per line cluster.

mod alpha;
mod cluster;
mod line;

pub use alpha::{alpha_shape_polygon, ring_area, ring_perimeter};
pub use cluster::{cluster_nn, connected_components, sor_denoise};
pub use line::{fit_line_segment, principal_axis, PrincipalAxis};

use serde::{Deserialize, Serialize};

use crate::classes::ElementClass;
use crate::error::{Error, Result};
use crate::fusion::{canonical_points, LabeledPoints};
use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Polyline(Vec<[f64; 2]>),
    /// Closed ring, first vertex not repeated.
    Polygon(Vec<[f64; 2]>),
}

impl Geometry {
    pub fn vertices(&self) -> &[[f64; 2]] {
        match self {
            Geometry::Polyline(v) | Geometry::Polygon(v) => v,
        }
    }

    /// Vertices of the curve, with the polygon ring explicitly closed.
    pub fn curve(&self) -> Vec<[f64; 2]> {
        match self {
            Geometry::Polyline(v) => v.clone(),
            Geometry::Polygon(v) => {
                let mut c = v.clone();
                if let Some(&first) = v.first() {
                    c.push(first);
                }
                c
            }
        }
    }

    pub fn bbox(&self) -> Option<[f64; 4]> {
        let v = self.vertices();
        let first = v.first()?;
        Some(v.iter().fold([first[0], first[1], first[0], first[1]], |b, p| {
            [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
        }))
    }

    fn same_as(&self, other: &Geometry, tol: f64) -> bool {
        let (a, b) = (self.vertices(), other.vertices());
        std::mem::discriminant(self) == std::mem::discriminant(other)
            && a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(p, q)| (p[0] - q[0]).abs() <= tol && (p[1] - q[1]).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapElement {
    pub class: ElementClass,
    pub geometry: Geometry,
    pub support_count: usize,
    /// Support relative to the best-supported element of the same class.
    pub confidence: f64,
}

impl MapElement {
    pub fn validate(&self) -> Result<()> {
        let v = self.geometry.vertices();
        if v.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Internal(format!("{} has non-finite vertices", self.class)));
        }
        let min = match self.geometry {
            Geometry::Polyline(_) => 2,
            Geometry::Polygon(_) => 3,
        };
        if v.len() < min {
            return Err(Error::Internal(format!("{} has {} vertices", self.class, v.len())));
        }
        if self.class.is_polygon() != matches!(self.geometry, Geometry::Polygon(_)) {
            return Err(Error::Internal(format!("{} has the wrong geometry type", self.class)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorMap {
    pub elements: Vec<MapElement>,
    pub crs_note: String,
}

impl VectorMap {
    pub fn new(crs_note: impl Into<String>) -> Self {
        Self {
            elements: Vec::new(),
            crs_note: crs_note.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn of_class(&self, class: ElementClass) -> impl Iterator<Item = &MapElement> + '_ {
        self.elements.iter().filter(move |e| e.class == class)
    }

    pub fn count(&self, class: ElementClass) -> usize {
        self.of_class(class).count()
    }

    pub fn bbox(&self) -> Option<[f64; 4]> {
        self.elements
            .iter()
            .filter_map(|e| e.geometry.bbox())
            .reduce(|a, b| [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])])
    }

    /// Recompute confidences as support relative to the per-class maximum.
    pub fn normalize_confidence(&mut self) {
        for class in ElementClass::ALL {
            let max = self.of_class(class).map(|e| e.support_count).max().unwrap_or(0);
            for e in self.elements.iter_mut().filter(|e| e.class == class) {
                e.confidence = if max == 0 {
                    1.0
                } else {
                    e.support_count as f64 / max as f64
                };
            }
        }
    }
}

/// Coordinate-frame note written on maps produced from a scene.
pub const DEFAULT_CRS_NOTE: &str = "local metric frame (m), z up";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorizeConfig {
    pub sor_k: usize,
    pub sor_n_sigma: f64,
    pub cluster_radius: f64,
    pub min_cluster_size: usize,
    pub alpha: f64,
    /// Line clusters longer than this are cut into pieces before fitting.
    pub split_length: f64,
    pub split_interval: f64,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        Self {
            sor_k: 16,
            sor_n_sigma: 2.0,
            cluster_radius: 0.5,
            min_cluster_size: 10,
            alpha: 0.5,
            split_length: 20.0,
            split_interval: 10.0,
        }
    }
}

impl VectorizeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.sor_k < 1 {
            return bad("sor_k must be >= 1");
        }
        if !(self.sor_n_sigma >= 0.0) {
            return bad("sor_n_sigma must be >= 0");
        }
        if !(self.cluster_radius > 0.0) {
            return bad("cluster_radius must be > 0");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(self.split_interval > 0.0 && self.split_length >= self.split_interval) {
            return bad("split_interval must be > 0 and no larger than split_length");
        }
        Ok(())
    }
}

/// Cut a line cluster into consecutive `interval`-long pieces along its
/// principal axis when it is longer than `max_length`.
fn split_long_cluster(cluster: Vec<Point3>, max_length: f64, interval: f64) -> Vec<Vec<Point3>> {
    let Some(axis) = principal_axis(&cluster) else {
        return Vec::new();
    };
    let (lo, hi) = axis.extent(&cluster);
    if hi - lo <= max_length {
        return vec![cluster];
    }
    let n = ((hi - lo) / interval).floor() as usize + 1;
    let mut pieces = vec![Vec::new(); n];
    for p in cluster {
        let k = (((axis.project(&p) - lo) / interval).floor() as usize).min(n - 1);
        pieces[k].push(p);
    }
    pieces.retain(|p| !p.is_empty());
    pieces
}

fn vectorize_class(class: ElementClass, points: &[Point3], cfg: &VectorizeConfig) -> Vec<MapElement> {
    let denoised = sor_denoise(points, cfg.sor_k, cfg.sor_n_sigma);
    let mut out = Vec::new();
    for cluster in cluster_nn(&denoised, cfg.cluster_radius, cfg.min_cluster_size) {
        if class.is_polygon() {
            if let Ok(ring) = alpha_shape_polygon(&cluster, cfg.alpha) {
                out.push(MapElement {
                    class,
                    geometry: Geometry::Polygon(ring),
                    support_count: cluster.len(),
                    confidence: 1.0,
                });
            }
            continue;
        }
        for piece in split_long_cluster(cluster, cfg.split_length, cfg.split_interval) {
            if let Ok([a, b]) = fit_line_segment(&piece) {
                out.push(MapElement {
                    class,
                    geometry: Geometry::Polyline(vec![a, b]),
                    support_count: piece.len(),
                    confidence: 1.0,
                });
            }
        }
    }
    out
}

/// Turn per-class labeled points into a vector map.
///
/// Input points are deduplicated and put in canonical order first, so the
/// result does not depend on point order or on repeated points.
pub fn vectorize_map(labeled: &LabeledPoints, cfg: &VectorizeConfig) -> Result<VectorMap> {
    cfg.validate()?;
    let mut map = VectorMap::new(DEFAULT_CRS_NOTE);
    let per_class: Vec<(ElementClass, Vec<Point3>)> = ElementClass::ALL
        .into_iter()
        .map(|class| (class, canonical_points(labeled.points_of(class))))
        .collect();
    let elements: Vec<Vec<MapElement>> = {
        use rayon::prelude::*;
        per_class
            .par_iter()
            .map(|(class, points)| vectorize_class(*class, points, cfg))
            .collect()
    };
    map.elements = elements.into_iter().flatten().collect();
    map.normalize_confidence();
    Ok(map)
}

/// Concatenate two maps, dropping elements that repeat an earlier one (same
/// class, vertices equal within 1e-6 m).
pub fn union_maps(a: &VectorMap, b: &VectorMap) -> VectorMap {
    const TOL: f64 = 1e-6;
    let mut out = VectorMap::new(a.crs_note.clone());
    for e in a.elements.iter().chain(&b.elements) {
        let duplicate = out
            .elements
            .iter()
            .any(|k| k.class == e.class && k.geometry.same_as(&e.geometry, TOL));
        if !duplicate {
            out.elements.push(e.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ClassTable;
    use crate::fusion::Provenance;

    fn line_element(class: ElementClass, a: [f64; 2], b: [f64; 2]) -> MapElement {
        MapElement {
            class,
            geometry: Geometry::Polyline(vec![a, b]),
            support_count: 10,
            confidence: 1.0,
        }
    }

    fn filled_rect(x0: f64, y0: f64, w: f64, h: f64, step: f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        let (nx, ny) = ((w / step).round() as usize, (h / step).round() as usize);
        for i in 0..=nx {
            for j in 0..=ny {
                pts.push(Point3::new(x0 + i as f64 * step, y0 + j as f64 * step, 0.0, 200.0));
            }
        }
        pts
    }

    fn random_rect(x0: f64, y0: f64, w: f64, h: f64, n: usize, seed: u64) -> Vec<Point3> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(x0 + rng.random_range(0.0..w), y0 + rng.random_range(0.0..h), 0.0, 200.0))
            .collect()
    }

    fn scene() -> LabeledPoints {
        let mut lp = LabeledPoints::new(ClassTable::default());
        lp.extend(
            ElementClass::PedestrianCrossing,
            random_rect(0.0, 0.0, 4.0, 6.0, 9600, 5),
            Provenance::FromImage,
            0,
        );
        lp.extend(
            ElementClass::StopLine,
            filled_rect(6.0, 0.0, 0.4, 6.0, 0.1),
            Provenance::FromImage,
            0,
        );
        lp
    }

    #[test]
    fn empty_input_gives_empty_map() {
        let map = vectorize_map(&LabeledPoints::new(ClassTable::default()), &VectorizeConfig::default()).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn crossing_and_stop_line() {
        let map = vectorize_map(&scene(), &VectorizeConfig::default()).unwrap();
        assert_eq!(map.count(ElementClass::PedestrianCrossing), 1);
        assert_eq!(map.count(ElementClass::StopLine), 1);
        assert_eq!(map.len(), 2);
        for e in &map.elements {
            e.validate().unwrap();
            assert_eq!(e.confidence, 1.0);
        }
        let crossing = map.of_class(ElementClass::PedestrianCrossing).next().unwrap();
        let area = ring_area(crossing.geometry.vertices());
        assert!((area - 24.0).abs() / 24.0 < 0.05, "area {area}");
        let stop = map.of_class(ElementClass::StopLine).next().unwrap();
        let v = stop.geometry.vertices();
        assert!((v[0][0] - 6.2).abs() < 1e-9 && (v[1][0] - 6.2).abs() < 1e-9);
    }

    #[test]
    fn duplicated_and_permuted_points_give_same_map() {
        let base = scene();
        let mut doubled = LabeledPoints::new(ClassTable::default());
        for class in ElementClass::ALL {
            let mut pts = base.points_of(class);
            pts.reverse();
            let copy = pts.clone();
            doubled.extend(class, pts, Provenance::FromImage, 0);
            doubled.extend(class, copy, Provenance::FromIntensity, 1);
        }
        let cfg = VectorizeConfig::default();
        assert_eq!(
            vectorize_map(&base, &cfg).unwrap(),
            vectorize_map(&doubled, &cfg).unwrap()
        );
    }

    #[test]
    fn long_lines_are_split() {
        let mut lp = LabeledPoints::new(ClassTable::default());
        let pts: Vec<_> = (0..=250)
            .map(|i| Point3::new(i as f64 * 0.1, 0.05 * (i % 2) as f64, 0.0, 200.0))
            .collect();
        lp.extend(ElementClass::LaneDivider, pts, Provenance::FromImage, 0);
        let map = vectorize_map(&lp, &VectorizeConfig::default()).unwrap();
        assert_eq!(map.count(ElementClass::LaneDivider), 3);
        let total: usize = map.elements.iter().map(|e| e.support_count).sum();
        assert_eq!(
            total,
            sor_denoise(&canonical_points(lp.points_of(ElementClass::LaneDivider)), 16, 2.0).len()
        );
    }

    #[test]
    fn union_is_idempotent_and_counts_disjoint() {
        let mut x = VectorMap::new(DEFAULT_CRS_NOTE);
        x.elements
            .push(line_element(ElementClass::StopLine, [0.0, 0.0], [1.0, 0.0]));
        x.elements
            .push(line_element(ElementClass::LaneDivider, [0.0, 1.0], [5.0, 1.0]));
        let mut y = VectorMap::new(DEFAULT_CRS_NOTE);
        y.elements
            .push(line_element(ElementClass::StopLine, [0.0, 3.0], [1.0, 3.0]));
        assert_eq!(union_maps(&x, &VectorMap::new(DEFAULT_CRS_NOTE)), x);
        assert_eq!(union_maps(&x, &x), x);
        assert_eq!(union_maps(&x, &y).len(), x.len() + y.len());
        let mut near = x.clone();
        near.elements[0].geometry = Geometry::Polyline(vec![[0.0, 0.0], [1.0 + 5e-7, 0.0]]);
        assert_eq!(union_maps(&x, &near).len(), 2);
    }
}
