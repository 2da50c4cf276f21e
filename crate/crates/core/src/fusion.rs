//! Label transfer onto ground points and point-level result fusion.
//!
//! Two paths label ground points: projecting them into a camera segmentation
//! mask, and looking up their BEV cell in a segmentation of the intensity
//! image. The two labeled sets are merged as a per-class union where a point
//! seen by both paths is kept once.

use std::collections::{BTreeMap, HashMap};

use crate::classes::{ClassTable, ElementClass};
use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraCalibration, GridSpec, Point3};
use crate::ground::PointCloud;
use crate::raster::{cell_members, LabelMask};

/// Coordinates closer than this on every axis denote the same point.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

/// Default camera/LiDAR timestamp tolerance in seconds.
pub const SYNC_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    FromImage,
    FromIntensity,
    Merged,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::FromImage => "from_image",
            Provenance::FromIntensity => "from_intensity",
            Provenance::Merged => "merged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub point: Point3,
    pub provenance: Provenance,
    /// Index into [`LabeledPoints::frames`].
    pub frame: u32,
}

/// Candidate points grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub class_table: ClassTable,
    /// Frame ids referenced by the points.
    pub frames: Vec<String>,
    pub classes: BTreeMap<ElementClass, Vec<LabeledPoint>>,
}

impl LabeledPoints {
    pub fn new(class_table: ClassTable) -> Self {
        Self {
            class_table,
            frames: Vec::new(),
            classes: BTreeMap::new(),
        }
    }

    fn frame_index(&mut self, frame_id: &str) -> u32 {
        match self.frames.iter().position(|f| f == frame_id) {
            Some(i) => i as u32,
            None => {
                self.frames.push(frame_id.to_string());
                (self.frames.len() - 1) as u32
            }
        }
    }

    pub fn push(&mut self, class: ElementClass, point: Point3, provenance: Provenance, frame_id: &str) {
        let frame = self.frame_index(frame_id);
        self.classes.entry(class).or_default().push(LabeledPoint {
            point,
            provenance,
            frame,
        });
    }

    /// Append points of one class tagged with a frame number.
    pub fn extend(&mut self, class: ElementClass, points: Vec<Point3>, provenance: Provenance, frame: usize) {
        let frame = self.frame_index(&format!("{frame:03}"));
        self.classes
            .entry(class)
            .or_default()
            .extend(points.into_iter().map(|point| LabeledPoint {
                point,
                provenance,
                frame,
            }));
    }

    pub fn points_of(&self, class: ElementClass) -> Vec<Point3> {
        self.classes
            .get(&class)
            .map(|v| v.iter().map(|lp| lp.point).collect())
            .unwrap_or_default()
    }

    pub fn count(&self, class: ElementClass) -> usize {
        self.classes.get(&class).map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (ElementClass, &LabeledPoint)> + '_ {
        self.classes.iter().flat_map(|(&c, v)| v.iter().map(move |lp| (c, lp)))
    }
}

/// Pixel containing continuous coordinate `c` (pixel `i` spans `[i - 0.5, i + 0.5)`).
fn nearest_pixel(c: f64) -> i64 {
    (c + 0.5).floor() as i64
}

/// Data-level fusion: give each ground point the class of the mask pixel it
/// projects to. Background, off-image and behind-camera points are dropped.
pub fn label_by_image(ground: &PointCloud, mask: &LabelMask, calib: &CameraCalibration) -> Result<LabeledPoints> {
    if mask.width != calib.image_width as usize || mask.height != calib.image_height as usize {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} mask", calib.image_width, calib.image_height),
            found: format!("{}x{}", mask.width, mask.height),
        });
    }
    let mut out = LabeledPoints::new(mask.class_table.clone());
    for p in &ground.points {
        let Ok(proj) = project_point(p, calib) else {
            continue;
        };
        let (col, row) = (nearest_pixel(proj.pixel.u), nearest_pixel(proj.pixel.v));
        if col < 0 || row < 0 || col as usize >= mask.width || row as usize >= mask.height {
            continue;
        }
        let id = mask.get(col as usize, row as usize);
        if let Some(class) = mask.class_table.class_of(id)? {
            out.push(class, *p, Provenance::FromImage, &ground.frame_id);
        }
    }
    Ok(out)
}

/// Give every point in a labeled BEV cell that cell's class.
pub fn label_by_intensity(ground: &PointCloud, spec: &GridSpec, seg: &LabelMask) -> Result<LabeledPoints> {
    if seg.width != spec.cols || seg.height != spec.rows {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} segmentation", spec.cols, spec.rows),
            found: format!("{}x{}", seg.width, seg.height),
        });
    }
    let mut out = LabeledPoints::new(seg.class_table.clone());
    for (cell, members) in cell_members(ground, spec).iter() {
        if let Some(class) = seg.class_table.class_of(seg.labels[cell])? {
            for &i in members {
                out.push(class, ground.points[i], Provenance::FromIntensity, &ground.frame_id);
            }
        }
    }
    Ok(out)
}

fn dedup_key(p: &Point3) -> [i64; 3] {
    const CELL: f64 = 1e-6;
    [p.x, p.y, p.z].map(|c| (c / CELL).floor() as i64)
}

fn same_point(a: &Point3, b: &Point3) -> bool {
    (a.x - b.x).abs() <= DEDUP_TOLERANCE && (a.y - b.y).abs() <= DEDUP_TOLERANCE && (a.z - b.z).abs() <= DEDUP_TOLERANCE
}

/// Groups points that coincide within [`DEDUP_TOLERANCE`].
struct DedupIndex {
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl DedupIndex {
    fn new() -> Self {
        Self { cells: HashMap::new() }
    }

    /// Index of a previously inserted point equal to `p`, if any.
    fn find(&self, p: &Point3, kept: &[Point3]) -> Option<usize> {
        let key = dedup_key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let k = [key[0] + dx, key[1] + dy, key[2] + dz];
                    if let Some(ids) = self.cells.get(&k) {
                        if let Some(&i) = ids.iter().find(|&&i| same_point(&kept[i], p)) {
                            return Some(i);
                        }
                    }
                }
            }
        }
        None
    }

    fn insert(&mut self, p: &Point3, id: usize) {
        self.cells.entry(dedup_key(p)).or_default().push(id);
    }
}

/// Sort points canonically and drop repeats.
pub fn canonical_points(mut points: Vec<Point3>) -> Vec<Point3> {
    points.sort_by(Point3::total_cmp);
    let mut index = DedupIndex::new();
    let mut kept: Vec<Point3> = Vec::with_capacity(points.len());
    for p in points {
        if index.find(&p, &kept).is_none() {
            index.insert(&p, kept.len());
            kept.push(p);
        }
    }
    kept
}

/// Per-class union of several labeled sets.
///
/// Coinciding points of one class are kept once; the survivor is tagged
/// `Merged` when the copies came from different paths. Output points and frame
/// ids are in canonical order, so the result does not depend on input order.
pub fn merge_many(inputs: &[&LabeledPoints]) -> Result<LabeledPoints> {
    let Some(first) = inputs.first() else {
        return Ok(LabeledPoints::new(ClassTable::default()));
    };
    if inputs.iter().any(|lp| lp.class_table != first.class_table) {
        return Err(Error::ClassTableMismatch);
    }
    let mut frames: Vec<String> = inputs.iter().flat_map(|lp| lp.frames.iter().cloned()).collect();
    frames.sort();
    frames.dedup();
    let frame_of = |lp: &LabeledPoints, f: u32| -> u32 {
        frames.binary_search(&lp.frames[f as usize]).expect("frame listed") as u32
    };

    let mut out = LabeledPoints::new(first.class_table.clone());
    for class in ElementClass::ALL {
        let mut all: Vec<LabeledPoint> = Vec::new();
        for lp in inputs {
            if let Some(v) = lp.classes.get(&class) {
                all.extend(v.iter().map(|p| LabeledPoint {
                    frame: frame_of(lp, p.frame),
                    ..*p
                }));
            }
        }
        if all.is_empty() {
            continue;
        }
        all.sort_by(|a, b| {
            a.point
                .total_cmp(&b.point)
                .then(a.provenance.cmp(&b.provenance))
                .then(a.frame.cmp(&b.frame))
        });
        let mut index = DedupIndex::new();
        let mut kept_points: Vec<Point3> = Vec::new();
        let mut kept: Vec<LabeledPoint> = Vec::new();
        for p in all {
            match index.find(&p.point, &kept_points) {
                Some(i) => {
                    if kept[i].provenance != p.provenance {
                        kept[i].provenance = Provenance::Merged;
                    }
                }
                None => {
                    index.insert(&p.point, kept.len());
                    kept_points.push(p.point);
                    kept.push(p);
                }
            }
        }
        out.classes.insert(class, kept);
    }
    out.frames = frames;
    Ok(out)
}

/// Result-level fusion of two labeled sets.
pub fn merge_labeled(a: &LabeledPoints, b: &LabeledPoints) -> Result<LabeledPoints> {
    merge_many(&[a, b])
}

/// Union of the first `k` frames.
pub fn aggregate_frames(frames: &[LabeledPoints], k: usize) -> Result<LabeledPoints> {
    if k == 0 {
        return Err(Error::InvalidConfig("frame count must be at least 1".into()));
    }
    if k > frames.len() {
        return Err(Error::NotEnoughFrames {
            requested: k,
            available: frames.len(),
        });
    }
    let refs: Vec<&LabeledPoints> = frames[..k].iter().collect();
    merge_many(&refs)
}

/// Reject a camera/LiDAR pair whose timestamps differ by more than `tolerance`.
pub fn check_sync(frame: &str, lidar_time: f64, camera_time: f64, tolerance: f64) -> Result<()> {
    let offset = (lidar_time - camera_time).abs();
    if offset > tolerance + 1e-12 {
        return Err(Error::SyncViolation {
            frame: frame.to_string(),
            offset,
            tolerance,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_calib(w: u32, h: u32) -> CameraCalibration {
        CameraCalibration {
            f: 1.0,
            dx: 0.01,
            dy: 0.01,
            u0: w as f64 / 2.0,
            v0: h as f64 / 2.0,
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
            image_width: w,
            image_height: h,
        }
    }

    fn cloud(points: Vec<Point3>) -> PointCloud {
        PointCloud::new(points, "000", 0.0)
    }

    fn table() -> ClassTable {
        ClassTable::default()
    }

    #[test]
    fn background_mask_labels_nothing() {
        let mask = LabelMask::background(40, 30, table());
        let pts = vec![Point3::xyz(0.0, 0.0, 5.0), Point3::xyz(0.1, 0.1, 2.0)];
        assert!(label_by_image(&cloud(pts), &mask, &identity_calib(40, 30))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_point_on_stop_line_pixel() {
        let mut mask = LabelMask::background(40, 30, table());
        // (0.05, 0.02, 1) projects to u = 20 + 5, v = 15 + 2.
        mask.set(25, 17, 2);
        let lp = label_by_image(
            &cloud(vec![Point3::xyz(0.05, 0.02, 1.0)]),
            &mask,
            &identity_calib(40, 30),
        )
        .unwrap();
        assert_eq!(lp.count(ElementClass::StopLine), 1);
        assert_eq!(lp.total(), 1);
    }

    #[test]
    fn rounding_and_bounds() {
        let mut mask = LabelMask::background(4, 4, table());
        for r in 0..4 {
            for c in 0..4 {
                mask.set(c, r, 1);
            }
        }
        let calib = identity_calib(4, 4);
        // u = 2 + 100 x / z: 3.4 -> pixel 3, 4.0 -> pixel 4 (outside), -1.0 -> outside.
        let pts = vec![
            Point3::xyz(0.014, 0.0, 1.0),
            Point3::xyz(0.02, 0.0, 1.0),
            Point3::xyz(0.0, 0.0, -1.0),
            Point3::xyz(-0.03, 0.0, 1.0),
        ];
        let lp = label_by_image(&cloud(pts), &mask, &calib).unwrap();
        assert_eq!(lp.count(ElementClass::LaneDivider), 1);
    }

    #[test]
    fn mismatched_mask_is_rejected() {
        let mask = LabelMask::background(10, 10, table());
        assert!(matches!(
            label_by_image(&cloud(vec![]), &mask, &identity_calib(20, 10)),
            Err(Error::DimensionMismatch { .. })
        ));
        let spec = GridSpec::new(0.0, 0.0, 1.0, 5, 5);
        assert!(matches!(
            label_by_intensity(&cloud(vec![]), &spec, &mask),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn intensity_labels_follow_cells() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 3, 3);
        let mut seg = LabelMask::background(3, 3, table());
        assert!(
            label_by_intensity(&cloud(vec![Point3::xyz(0.5, 0.5, 0.0)]), &spec, &seg)
                .unwrap()
                .is_empty()
        );
        seg.set(1, 2, 3);
        let pts = vec![
            Point3::xyz(1.1, 2.1, 0.0),
            Point3::xyz(1.5, 2.5, 0.0),
            Point3::xyz(1.9, 2.9, 0.0),
            Point3::xyz(0.5, 0.5, 0.0),
        ];
        let lp = label_by_intensity(&cloud(pts), &spec, &seg).unwrap();
        assert_eq!(lp.count(ElementClass::PedestrianCrossing), 3);
        assert_eq!(lp.total(), 3);
    }

    #[test]
    fn random_segmentation_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = GridSpec::new(0.0, 0.0, 0.5, 10, 10);
        let mut seg = LabelMask::background(10, 10, table());
        for l in seg.labels.iter_mut() {
            *l = rng.random_range(0..4);
        }
        let pts: Vec<_> = (0..2000)
            .map(|_| Point3::xyz(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), 0.0))
            .collect();
        let lp = label_by_intensity(&cloud(pts.clone()), &spec, &seg).unwrap();
        // Oracle: count points per cell by a linear scan, sum by cell label.
        let mut expected = [0usize; 4];
        for p in &pts {
            let (c, r) = ((p.x / 0.5).floor() as usize, (p.y / 0.5).floor() as usize);
            expected[seg.get(c, r) as usize] += 1;
        }
        for (id, class) in table().classes() {
            assert_eq!(lp.count(class), expected[id as usize]);
        }
    }

    fn sample(seed: u64, n: usize, prov: Provenance) -> LabeledPoints {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lp = LabeledPoints::new(table());
        for _ in 0..n {
            let class = ElementClass::ALL[rng.random_range(0..3)];
            let p = Point3::new(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), 0.0, 100.0);
            lp.push(class, p, prov, "000");
        }
        lp
    }

    #[test]
    fn merge_identity_and_concatenation() {
        let x = merge_labeled(&sample(1, 50, Provenance::FromImage), &LabeledPoints::new(table())).unwrap();
        assert_eq!(merge_labeled(&x, &LabeledPoints::new(table())).unwrap(), x);
        assert_eq!(merge_labeled(&x, &x).unwrap(), x);

        let mut a = LabeledPoints::new(table());
        a.extend(
            ElementClass::StopLine,
            vec![Point3::xyz(0.0, 0.0, 0.0)],
            Provenance::FromImage,
            0,
        );
        let mut b = LabeledPoints::new(table());
        b.extend(
            ElementClass::LaneDivider,
            vec![Point3::xyz(0.0, 0.0, 0.0)],
            Provenance::FromIntensity,
            0,
        );
        let m = merge_labeled(&a, &b).unwrap();
        assert_eq!(m.count(ElementClass::StopLine), 1);
        assert_eq!(m.count(ElementClass::LaneDivider), 1);
    }

    #[test]
    fn merge_deduplicates_against_pairwise_oracle() {
        let a = sample(3, 200, Provenance::FromImage);
        let mut b = sample(4, 100, Provenance::FromIntensity);
        // Reuse half of a's points in b, some nudged below the tolerance.
        for (i, (class, p)) in a.iter().enumerate().take(100) {
            let mut q = p.point;
            if i % 2 == 0 {
                q.x += 5e-10;
            }
            b.push(class, q, Provenance::FromIntensity, "001");
        }
        let merged = merge_labeled(&a, &b).unwrap();
        for class in ElementClass::ALL {
            let mut all: Vec<Point3> = a.points_of(class);
            all.extend(b.points_of(class));
            let mut unique: Vec<Point3> = Vec::new();
            for p in all {
                if !unique.iter().any(|u| same_point(u, &p)) {
                    unique.push(p);
                }
            }
            assert_eq!(merged.count(class), unique.len());
        }
        let n_merged = merged
            .iter()
            .filter(|(_, p)| p.provenance == Provenance::Merged)
            .count();
        assert_eq!(n_merged, 100);
        assert_eq!(merged.frames, vec!["000".to_string(), "001".to_string()]);
    }

    #[test]
    fn mismatched_tables() {
        let mut other = table();
        other.entries[1].gray = 81;
        assert!(matches!(
            merge_labeled(&LabeledPoints::new(table()), &LabeledPoints::new(other)),
            Err(Error::ClassTableMismatch)
        ));
    }

    #[test]
    fn aggregation() {
        let f = sample(9, 80, Provenance::FromImage);
        let one = aggregate_frames(std::slice::from_ref(&f), 1).unwrap();
        assert_eq!(one, merge_many(&[&f]).unwrap());
        assert_eq!(aggregate_frames(&[f.clone(), f.clone()], 2).unwrap(), one);
        assert!(matches!(aggregate_frames(&[f], 2), Err(Error::NotEnoughFrames { .. })));
    }

    #[test]
    fn sync_tolerance() {
        assert!(check_sync("0", 1.0, 1.019, SYNC_TOLERANCE).is_ok());
        assert!(check_sync("0", 1.0, 1.02, SYNC_TOLERANCE).is_ok());
        assert!(matches!(
            check_sync("0", 1.0, 1.03, SYNC_TOLERANCE),
            Err(Error::SyncViolation { .. })
        ));
    }
}
