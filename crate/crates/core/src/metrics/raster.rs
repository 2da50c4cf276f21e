use crate::classes::ElementClass;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::vectorize::{Geometry, MapElement, VectorMap};

/// Occupancy of one class on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMask {
    pub spec: GridSpec,
    pub bits: Vec<bool>,
}

impl RasterMask {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            spec,
            bits: vec![false; spec.len()],
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.spec.cols + col]
    }
}

/// Columns whose centres lie in `[x0, x1)`.
fn column_span(spec: &GridSpec, x0: f64, x1: f64) -> std::ops::Range<usize> {
    let first = ((x0 - spec.x_min) / spec.cell_size_x - 0.5).ceil().max(0.0);
    let end = ((x1 - spec.x_min) / spec.cell_size_x - 0.5).ceil().max(0.0);
    let (first, end) = (first as usize, (end as usize).min(spec.cols));
    first.min(end)..end
}

/// Rows whose centres lie in `[y0, y1]`.
fn row_span(spec: &GridSpec, y0: f64, y1: f64) -> std::ops::Range<usize> {
    let first = ((y0 - spec.y_min) / spec.cell_size_y - 0.5).ceil().max(0.0) as usize;
    let last = ((y1 - spec.y_min) / spec.cell_size_y - 0.5).floor();
    if last < 0.0 {
        return 0..0;
    }
    let end = (last as usize + 1).min(spec.rows);
    first.min(end)..end
}

fn fill_polygon(ring: &[[f64; 2]], spec: &GridSpec, out: &mut Vec<usize>) {
    let n = ring.len();
    if n < 3 {
        return;
    }
    let (ylo, yhi) = ring
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
    let mut xs = Vec::new();
    for row in row_span(spec, ylo, yhi) {
        let y = spec.y_min + (row as f64 + 0.5) * spec.cell_size_y;
        xs.clear();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a[1] > y) != (b[1] > y) {
                xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            for col in column_span(spec, pair[0], pair[1]) {
                out.push(row * spec.cols + col);
            }
        }
    }
}

fn stroke_polyline(vertices: &[[f64; 2]], width: f64, spec: &GridSpec, out: &mut Vec<usize>) {
    let half = width / 2.0;
    let mut mark = |bbox: [f64; 4], covered: &dyn Fn(f64, f64) -> bool| {
        let rows = row_span(spec, bbox[1], bbox[3]);
        let cols = column_span(spec, bbox[0], bbox[2] + spec.cell_size_x);
        for row in rows {
            let y = spec.y_min + (row as f64 + 0.5) * spec.cell_size_y;
            for col in cols.clone() {
                let x = spec.x_min + (col as f64 + 0.5) * spec.cell_size_x;
                if covered(x, y) {
                    out.push(row * spec.cols + col);
                }
            }
        }
    };
    for seg in vertices.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let bbox = [
            a[0].min(b[0]) - half,
            a[1].min(b[1]) - half,
            a[0].max(b[0]) + half,
            a[1].max(b[1]) + half,
        ];
        mark(bbox, &|x, y| {
            let t = ((x - a[0]) * dx + (y - a[1]) * dy) / len2;
            if !(0.0..=1.0).contains(&t) {
                return false;
            }
            let cross = (x - a[0]) * dy - (y - a[1]) * dx;
            cross * cross <= half * half * len2
        });
    }
    // Round joins at interior vertices.
    if vertices.len() > 2 {
        for v in &vertices[1..vertices.len() - 1] {
            let bbox = [v[0] - half, v[1] - half, v[0] + half, v[1] + half];
            mark(bbox, &|x, y| (x - v[0]).powi(2) + (y - v[1]).powi(2) <= half * half);
        }
    }
}

/// Sorted, unique cell indices covered by one element.
///
/// Polygons cover cells whose centre is inside the ring (even-odd rule);
/// polylines cover cells whose centre is within `line_width / 2` of a segment,
/// measured perpendicular to it (flat caps, round joins).
pub fn element_cells(element: &MapElement, spec: &GridSpec, line_width: f64) -> Vec<usize> {
    let mut cells = Vec::new();
    match &element.geometry {
        Geometry::Polygon(ring) => fill_polygon(ring, spec, &mut cells),
        Geometry::Polyline(v) => stroke_polyline(v, line_width, spec, &mut cells),
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Rasterize every element of `class` onto `spec`.
pub fn rasterize_map(map: &VectorMap, class: ElementClass, spec: &GridSpec, line_width: f64) -> RasterMask {
    let mut mask = RasterMask::empty(*spec);
    for e in map.of_class(class) {
        for cell in element_cells(e, spec, line_width) {
            mask.bits[cell] = true;
        }
    }
    mask
}

fn ratio(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union of two masks on the same grid.
///
/// Two empty masks score 1, one empty mask scores 0.
pub fn iou(e1: &RasterMask, e2: &RasterMask) -> Result<f64> {
    if e1.spec != e2.spec {
        return Err(Error::SpecMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in e1.bits.iter().zip(&e2.bits) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(ratio(inter, union))
}

/// IoU restricted to cells where `region` is set.
pub fn iou_in_region(e1: &RasterMask, e2: &RasterMask, region: &[bool]) -> Result<f64> {
    if e1.spec != e2.spec || region.len() != e1.bits.len() {
        return Err(Error::SpecMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for ((&a, &b), &r) in e1.bits.iter().zip(&e2.bits).zip(region) {
        if r {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
    }
    Ok(ratio(inter, union))
}

/// IoU of two sorted cell lists.
pub fn sparse_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    ratio(inter, a.len() + b.len() - inter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::DEFAULT_CRS_NOTE;

    fn element(class: ElementClass, geometry: Geometry) -> MapElement {
        MapElement {
            class,
            geometry,
            support_count: 1,
            confidence: 1.0,
        }
    }

    fn map_of(elements: Vec<MapElement>) -> VectorMap {
        VectorMap {
            elements,
            crs_note: DEFAULT_CRS_NOTE.into(),
        }
    }

    fn spec() -> GridSpec {
        GridSpec::new(-1.0, -1.0, 0.1, 40, 40)
    }

    #[test]
    fn empty_map_rasterizes_to_nothing() {
        let m = rasterize_map(&VectorMap::default(), ElementClass::StopLine, &spec(), 0.2);
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn unit_square_covers_100_cells() {
        let sq = element(
            ElementClass::PedestrianCrossing,
            Geometry::Polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        );
        let m = rasterize_map(&map_of(vec![sq]), ElementClass::PedestrianCrossing, &spec(), 0.2);
        // Oracle: cell centres strictly inside the square.
        let mut oracle = 0;
        for r in 0..40 {
            for c in 0..40 {
                let (x, y) = spec().cell_center(c, r);
                if x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0 {
                    oracle += 1;
                    assert!(m.get(c, r));
                }
            }
        }
        assert_eq!(oracle, 100);
        assert_eq!(m.count(), 100);
    }

    #[test]
    fn horizontal_line_covers_two_rows() {
        let line = element(ElementClass::StopLine, Geometry::Polyline(vec![[0.0, 0.0], [2.0, 0.0]]));
        let m = rasterize_map(&map_of(vec![line]), ElementClass::StopLine, &spec(), 0.2);
        let mut oracle = 0;
        for r in 0..40 {
            for c in 0..40 {
                let (x, y) = spec().cell_center(c, r);
                if (0.0..=2.0).contains(&x) && y.abs() <= 0.1 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(oracle, 40);
        assert_eq!(m.count(), 40);
    }

    #[test]
    fn other_classes_are_ignored() {
        let line = element(ElementClass::StopLine, Geometry::Polyline(vec![[0.0, 0.0], [2.0, 0.0]]));
        let m = rasterize_map(&map_of(vec![line]), ElementClass::LaneDivider, &spec(), 0.2);
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn iou_cases() {
        let s = spec();
        let mut a = RasterMask::empty(s);
        let mut b = RasterMask::empty(s);
        assert_eq!(iou(&a, &b).unwrap(), 1.0);
        a.bits[5] = true;
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        b.bits[6] = true;
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        b.bits[5] = true;
        assert_eq!(iou(&a, &b).unwrap(), 0.5);
        assert_eq!(iou(&b, &a).unwrap(), 0.5);
        let other = RasterMask::empty(GridSpec::new(0.0, 0.0, 0.1, 40, 40));
        assert!(matches!(iou(&a, &other), Err(Error::SpecMismatch)));
    }

    #[test]
    fn half_overlapping_squares() {
        let s = GridSpec::new(-0.5, -0.5, 0.01, 300, 200);
        let sq = |x0: f64| {
            element(
                ElementClass::PedestrianCrossing,
                Geometry::Polygon(vec![[x0, 0.0], [x0 + 1.0, 0.0], [x0 + 1.0, 1.0], [x0, 1.0]]),
            )
        };
        let a = rasterize_map(&map_of(vec![sq(0.0)]), ElementClass::PedestrianCrossing, &s, 0.2);
        let b = rasterize_map(&map_of(vec![sq(0.5)]), ElementClass::PedestrianCrossing, &s, 0.2);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        let ca = element_cells(&sq(0.0), &s, 0.2);
        let cb = element_cells(&sq(0.5), &s, 0.2);
        assert!((sparse_iou(&ca, &cb) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn polyline_joins_are_round() {
        let l = element(
            ElementClass::LaneDivider,
            Geometry::Polyline(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
        );
        let cells = element_cells(&l, &spec(), 0.4);
        let has = |x: f64, y: f64| {
            let (c, r) = spec().raw_index(x, y);
            cells.contains(&(r as usize * 40 + c as usize))
        };
        // Beyond both segments' ends: covered only by the join disk.
        assert!(has(1.15, -0.05));
        // 0.21 from the vertex: a square join would cover it, a round one does not.
        assert!(!has(1.15, -0.15));
    }
}
