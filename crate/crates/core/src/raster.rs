//! BEV intensity images, cell membership and label masks.
//!
//! Grids are stored row-major with row 0 at the minimum y and column 0 at the
//! minimum x.

use serde::{Deserialize, Serialize};

use crate::classes::{ClassTable, ElementClass, BACKGROUND_ID};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point3};
use crate::ground::PointCloud;
use crate::vectorize::{connected_components, principal_axis};

/// How raw sensor intensities are mapped onto gray levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityScaling {
    /// Intensities are already on a 0..255 scale; cell means above 255 are clamped.
    #[default]
    Clamp,
    /// Rescale the cloud's intensity range onto 0..255 before averaging.
    MinMax,
}

/// Per-cell mean intensity over a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    pub spec: GridSpec,
    /// Gray value per cell in `[0, 255]`, zero for empty cells.
    pub cells: Vec<f64>,
    /// Number of points per cell.
    pub counts: Vec<u32>,
    /// Points that fell outside the grid.
    pub skipped: usize,
}

impl IntensityImage {
    pub fn gray(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.spec.cols + col]
    }

    pub fn count(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.spec.cols + col]
    }

    /// Gray values rounded to 8 bits.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.cells.iter().map(|&g| g.round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Compressed cell → point-index table, cells in ascending linear index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMembers {
    cells: Vec<usize>,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    pub skipped: usize,
}

impl CellMembers {
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(k, &cell)| (cell, &self.indices[self.offsets[k]..self.offsets[k + 1]]))
    }

    pub fn get(&self, cell: usize) -> &[usize] {
        match self.cells.binary_search(&cell) {
            Ok(k) => &self.indices[self.offsets[k]..self.offsets[k + 1]],
            Err(_) => &[],
        }
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn member_count(&self) -> usize {
        self.indices.len()
    }
}

/// Bucket point indices by grid cell. Indices within a bucket are ascending.
pub fn cell_members(ground: &PointCloud, spec: &GridSpec) -> CellMembers {
    let mut keyed: Vec<(usize, usize)> = Vec::with_capacity(ground.len());
    let mut skipped = 0;
    for (i, p) in ground.points.iter().enumerate() {
        match spec.linear_index(p.x, p.y) {
            Some(cell) => keyed.push((cell, i)),
            None => skipped += 1,
        }
    }
    keyed.sort_unstable();
    let mut cells = Vec::new();
    let mut offsets = vec![0];
    let mut indices = Vec::with_capacity(keyed.len());
    for (k, &(cell, i)) in keyed.iter().enumerate() {
        if k > 0 && keyed[k - 1].0 != cell {
            cells.push(keyed[k - 1].0);
            offsets.push(indices.len());
        }
        indices.push(i);
    }
    if let Some(&(cell, _)) = keyed.last() {
        cells.push(cell);
        offsets.push(indices.len());
    }
    CellMembers {
        cells,
        offsets,
        indices,
        skipped,
    }
}

/// Pairwise (cascade) sum; combined with sorting it gives an order-free result.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Average reflective intensity per grid cell.
pub fn rasterize_intensity(ground: &PointCloud, spec: &GridSpec, scaling: IntensityScaling) -> IntensityImage {
    let members = cell_members(ground, spec);
    let (lo, hi) = ground.points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p.intensity), hi.max(p.intensity))
    });
    let scale = |t: f64| match scaling {
        IntensityScaling::Clamp => t,
        IntensityScaling::MinMax if hi > lo => (t - lo) / (hi - lo) * 255.0,
        IntensityScaling::MinMax => 0.0,
    };
    let mut cells = vec![0.0; spec.len()];
    let mut counts = vec![0u32; spec.len()];
    let mut buf = Vec::new();
    for (cell, idx) in members.iter() {
        buf.clear();
        buf.extend(idx.iter().map(|&i| scale(ground.points[i].intensity)));
        buf.sort_by(f64::total_cmp);
        cells[cell] = (pairwise_sum(&buf) / buf.len() as f64).clamp(0.0, 255.0);
        counts[cell] = idx.len() as u32;
    }
    IntensityImage {
        spec: *spec,
        cells,
        counts,
        skipped: members.skipped,
    }
}

/// Grid of class ids (an image segmentation or a BEV segmentation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    /// Row-major label ids.
    pub labels: Vec<u8>,
    pub class_table: ClassTable,
}

impl LabelMask {
    pub fn background(width: usize, height: usize, class_table: ClassTable) -> Self {
        Self {
            width,
            height,
            labels: vec![BACKGROUND_ID; width * height],
            class_table,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, id: u8) {
        self.labels[row * self.width + col] = id;
    }

    pub fn validate(&self) -> Result<()> {
        self.class_table.validate()?;
        if self.labels.len() != self.width * self.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", self.width * self.height),
                found: format!("{} labels", self.labels.len()),
            });
        }
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        for (id, _) in seen.iter().enumerate().filter(|(_, &s)| s) {
            if self.class_table.entry(id as u8).is_none() {
                return Err(Error::UnknownLabel(id as u8));
            }
        }
        Ok(())
    }
}

/// Binary mask of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    pub id: u8,
    pub class: ElementClass,
    pub bits: Vec<bool>,
}

impl ClassMask {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// One binary mask per non-background class of the table.
pub fn one_hot_masks(mask: &LabelMask) -> Result<Vec<ClassMask>> {
    mask.validate()?;
    Ok(mask
        .class_table
        .classes()
        .map(|(id, class)| ClassMask {
            id,
            class,
            bits: mask.labels.iter().map(|&l| l == id).collect(),
        })
        .collect())
}

/// Inverse of [`one_hot_masks`]: first set class wins, background elsewhere.
pub fn decode_one_hot(masks: &[ClassMask], width: usize, height: usize, class_table: ClassTable) -> LabelMask {
    let mut out = LabelMask::background(width, height, class_table);
    for (i, label) in out.labels.iter_mut().enumerate() {
        if let Some(m) = masks.iter().find(|m| m.bits[i]) {
            *label = m.id;
        }
    }
    out
}

/// Thresholds of the rule-based BEV paint segmenter.
///
/// Paint cells (mean gray at or above `paint_threshold`) are grouped into
/// components by `link_radius`; each component is classified from its principal
/// extent (`length`) and the standard deviation across its minor axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaintSegmenter {
    pub paint_threshold: f64,
    pub link_radius: f64,
    pub min_cells: usize,
    pub crossing_min_spread: f64,
    pub crossing_min_length: f64,
    pub line_max_spread: f64,
    pub stop_line_max_spread: f64,
    pub stop_line_min_length: f64,
    pub stop_line_max_length: f64,
    pub divider_min_length: f64,
}

impl Default for PaintSegmenter {
    fn default() -> Self {
        Self {
            paint_threshold: 128.0,
            link_radius: 0.5,
            min_cells: 10,
            crossing_min_spread: 0.35,
            crossing_min_length: 2.0,
            line_max_spread: 0.08,
            stop_line_max_spread: 0.2,
            stop_line_min_length: 4.5,
            stop_line_max_length: 12.0,
            divider_min_length: 2.0,
        }
    }
}

impl PaintSegmenter {
    pub fn classify(&self, length: f64, spread: f64) -> Option<ElementClass> {
        if spread >= self.crossing_min_spread && length >= self.crossing_min_length {
            Some(ElementClass::PedestrianCrossing)
        } else if spread < self.line_max_spread && length >= self.divider_min_length {
            Some(ElementClass::LaneDivider)
        } else if spread < self.stop_line_max_spread
            && (self.stop_line_min_length..=self.stop_line_max_length).contains(&length)
        {
            Some(ElementClass::StopLine)
        } else {
            None
        }
    }

    /// Segment an intensity image into a class mask of the same grid.
    pub fn segment(&self, image: &IntensityImage, class_table: &ClassTable) -> LabelMask {
        let spec = image.spec;
        let mut mask = LabelMask::background(spec.cols, spec.rows, class_table.clone());
        let paint: Vec<usize> = (0..spec.len())
            .filter(|&i| image.counts[i] > 0 && image.cells[i] >= self.paint_threshold)
            .collect();
        let centers: Vec<Point3> = paint
            .iter()
            .map(|&i| {
                let (x, y) = spec.cell_center(i % spec.cols, i / spec.cols);
                Point3::xyz(x, y, 0.0)
            })
            .collect();
        for component in connected_components(&centers, self.link_radius) {
            if component.len() < self.min_cells {
                continue;
            }
            let pts: Vec<Point3> = component.iter().map(|&k| centers[k]).collect();
            let Some(axis) = principal_axis(&pts) else {
                continue;
            };
            let (lo, hi) = axis.extent(&pts);
            let length = hi - lo + spec.cell_size_x.max(spec.cell_size_y);
            let Some(class) = self.classify(length, axis.minor_spread()) else {
                continue;
            };
            let Some(id) = class_table.id_of(class) else {
                continue;
            };
            for &k in &component {
                mask.labels[paint[k]] = id;
            }
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<Point3>) -> PointCloud {
        PointCloud::new(points, "t", 0.0)
    }

    #[test]
    fn cell_mean_of_two_points() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 2, 2);
        let img = rasterize_intensity(
            &cloud(vec![
                Point3::new(0.2, 0.2, 0.0, 100.0),
                Point3::new(0.7, 0.4, 0.0, 200.0),
            ]),
            &spec,
            IntensityScaling::Clamp,
        );
        assert_eq!(img.gray(0, 0), 150.0);
        assert_eq!(img.count(0, 0), 2);
        assert_eq!(img.gray(1, 1), 0.0);
        assert_eq!(img.count(1, 1), 0);
    }

    #[test]
    fn random_cell_mean_matches_scalar_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..10)
            .map(|_| Point3::new(rng.random(), rng.random(), 0.0, rng.random_range(0.0..255.0)))
            .collect();
        let mut oracle = 0.0;
        for p in &pts {
            oracle += p.intensity;
        }
        oracle /= pts.len() as f64;
        let img = rasterize_intensity(
            &cloud(pts),
            &GridSpec::new(0.0, 0.0, 1.0, 1, 1),
            IntensityScaling::Clamp,
        );
        assert!((img.gray(0, 0) - oracle).abs() < 1e-6);
    }

    #[test]
    fn bright_points_are_clamped_and_outside_points_counted() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 1, 1);
        let img = rasterize_intensity(
            &cloud(vec![
                Point3::new(0.5, 0.5, 0.0, 400.0),
                Point3::new(5.0, 0.5, 0.0, 10.0),
            ]),
            &spec,
            IntensityScaling::Clamp,
        );
        assert_eq!(img.gray(0, 0), 255.0);
        assert_eq!(img.skipped, 1);
        let img = rasterize_intensity(
            &cloud(vec![
                Point3::new(0.5, 0.5, 0.0, 400.0),
                Point3::new(0.1, 0.1, 0.0, 1000.0),
            ]),
            &spec,
            IntensityScaling::MinMax,
        );
        assert_eq!(img.gray(0, 0), 127.5);
    }

    #[test]
    fn cell_members_buckets() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 3, 3);
        let single = cell_members(&cloud(vec![Point3::xyz(1.5, 2.5, 0.0)]), &spec);
        assert_eq!(single.occupied_cells(), 1);
        assert_eq!(single.get(2 * 3 + 1), &[0]);
        let pair = cell_members(
            &cloud(vec![Point3::xyz(0.1, 0.1, 0.0), Point3::xyz(0.9, 0.9, 0.0)]),
            &spec,
        );
        assert_eq!(pair.occupied_cells(), 1);
        assert_eq!(pair.get(0), &[0, 1]);
    }

    #[test]
    fn cell_members_cover_in_grid_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..1000)
            .map(|_| Point3::xyz(rng.random_range(-1.0..11.0), rng.random_range(-1.0..11.0), 0.0))
            .collect();
        let spec = GridSpec::new(0.0, 0.0, 0.5, 20, 20);
        let members = cell_members(&cloud(pts.clone()), &spec);
        let in_grid = pts
            .iter()
            .filter(|p| (0.0..10.0).contains(&p.x) && (0.0..10.0).contains(&p.y))
            .count();
        let total: usize = members.iter().map(|(_, b)| b.len()).sum();
        assert_eq!(total, in_grid);
        assert_eq!(members.skipped, pts.len() - in_grid);
        for (cell, bucket) in members.iter() {
            for &i in bucket {
                assert_eq!(spec.linear_index(pts[i].x, pts[i].y), Some(cell));
            }
        }
    }

    fn mask_from(labels: Vec<u8>, width: usize) -> LabelMask {
        let height = labels.len() / width;
        LabelMask {
            width,
            height,
            labels,
            class_table: ClassTable::default(),
        }
    }

    #[test]
    fn one_hot_of_background_is_empty() {
        let masks = one_hot_masks(&mask_from(vec![0; 12], 4)).unwrap();
        assert_eq!(masks.len(), 3);
        assert!(masks.iter().all(|m| m.count() == 0));
    }

    #[test]
    fn one_hot_single_stop_line_pixel() {
        let mut labels = vec![0; 12];
        labels[5] = 2;
        let masks = one_hot_masks(&mask_from(labels, 4)).unwrap();
        let stop = masks.iter().find(|m| m.class == ElementClass::StopLine).unwrap();
        assert_eq!(stop.count(), 1);
        assert!(stop.bits[5]);
    }

    #[test]
    fn one_hot_counts_match_histogram_and_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<u8> = (0..600).map(|_| rng.random_range(0..4)).collect();
        let mut histogram = [0usize; 4];
        for &l in &labels {
            histogram[l as usize] += 1;
        }
        let mask = mask_from(labels, 30);
        let masks = one_hot_masks(&mask).unwrap();
        for m in &masks {
            assert_eq!(m.count(), histogram[m.id as usize]);
        }
        assert_eq!(decode_one_hot(&masks, 30, 20, ClassTable::default()), mask);
    }

    #[test]
    fn unknown_labels_are_rejected() {
        assert!(matches!(
            one_hot_masks(&mask_from(vec![0, 7, 0, 0], 2)),
            Err(Error::UnknownLabel(7))
        ));
    }

    #[test]
    fn segmenter_classifies_painted_shapes() {
        // A 6 m x 0.4 m stop line, a 15 m x 0.15 m divider and a 4 m x 6 m
        // block of stripes on a 0.05 m grid.
        let spec = GridSpec::new(-10.0, -10.0, 0.05, 400, 400);
        let mut pts = Vec::new();
        let mut add_rect = |x0: f64, y0: f64, w: f64, h: f64| {
            let mut x = x0 + 0.025;
            while x < x0 + w {
                let mut y = y0 + 0.025;
                while y < y0 + h {
                    pts.push(Point3::new(x, y, 0.0, 200.0));
                    y += 0.05;
                }
                x += 0.05;
            }
        };
        add_rect(-8.0, -8.0, 6.0, 0.4);
        add_rect(-8.0, -5.0, 15.0, 0.15);
        for k in 0..7 {
            add_rect(-8.0 + 0.9 * k as f64, 2.0, 0.5, 4.0);
        }
        let img = rasterize_intensity(&cloud(pts), &spec, IntensityScaling::Clamp);
        let mask = PaintSegmenter::default().segment(&img, &ClassTable::default());
        let table = ClassTable::default();
        let at = |x: f64, y: f64| {
            let (c, r) = spec.raw_index(x, y);
            table.class_of(mask.get(c as usize, r as usize)).unwrap()
        };
        assert_eq!(at(-5.0, -7.8), Some(ElementClass::StopLine));
        assert_eq!(at(0.0, -4.95), Some(ElementClass::LaneDivider));
        assert_eq!(at(-7.8, 3.0), Some(ElementClass::PedestrianCrossing));
        assert_eq!(at(5.0, 5.0), None);
    }
}
