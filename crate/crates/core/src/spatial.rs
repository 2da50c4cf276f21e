//! Uniform-grid spatial hash over the xy plane.
//!
//! Buckets are keyed by xy cell; distances are evaluated by the caller-chosen
//! metric (planar or full 3D). Any point in a cell at Chebyshev ring `s` from the
//! query's cell is at least `(s - 1) * cell` away in xy, which bounds the
//! expanding kNN search.

use std::collections::HashMap;

use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Metric {
    Planar,
    Space,
}

impl Metric {
    #[inline]
    pub(crate) fn dist2(self, a: &Point3, b: &Point3) -> f64 {
        match self {
            Metric::Planar => a.dist2_xy(b),
            Metric::Space => a.dist2(b),
        }
    }
}

pub(crate) struct GridIndex<'a> {
    points: &'a [Point3],
    cell: f64,
    metric: Metric,
    order: Vec<u32>,
    buckets: HashMap<(i64, i64), (u32, u32)>,
    key_min: (i64, i64),
    key_max: (i64, i64),
}

impl<'a> GridIndex<'a> {
    pub(crate) fn new(points: &'a [Point3], cell: f64, metric: Metric) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let key = |p: &Point3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        let mut keyed: Vec<((i64, i64), u32)> = points.iter().enumerate().map(|(i, p)| (key(p), i as u32)).collect();
        keyed.sort_unstable();
        let mut buckets = HashMap::new();
        let mut key_min = (i64::MAX, i64::MAX);
        let mut key_max = (i64::MIN, i64::MIN);
        let mut start = 0usize;
        while start < keyed.len() {
            let k = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == k {
                end += 1;
            }
            buckets.insert(k, (start as u32, end as u32));
            key_min = (key_min.0.min(k.0), key_min.1.min(k.1));
            key_max = (key_max.0.max(k.0), key_max.1.max(k.1));
            start = end;
        }
        Self {
            points,
            cell,
            metric,
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            buckets,
            key_min,
            key_max,
        }
    }

    /// Cell size suited to finding about `k` neighbours per query.
    pub(crate) fn cell_for_knn(points: &[Point3], k: usize) -> f64 {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let area = ((x1 - x0) * (y1 - y0)).max(1e-6);
        let h = (area * (k.max(1) as f64) / points.len().max(1) as f64).sqrt();
        h.clamp(1e-3, 1e3)
    }

    fn key(&self, p: &Point3) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn bucket(&self, key: (i64, i64)) -> &[u32] {
        match self.buckets.get(&key) {
            Some(&(s, e)) => &self.order[s as usize..e as usize],
            None => &[],
        }
    }

    /// Indices of all points within `radius` of `q` (inclusive).
    pub(crate) fn within(&self, q: &Point3, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy) = self.key(q);
        for gx in (cx - reach).max(self.key_min.0)..=(cx + reach).min(self.key_max.0) {
            for gy in (cy - reach).max(self.key_min.1)..=(cy + reach).min(self.key_max.1) {
                for &i in self.bucket((gx, gy)) {
                    if self.metric.dist2(q, &self.points[i as usize]) <= r2 {
                        out.push(i as usize);
                    }
                }
            }
        }
    }

    /// Squared distances to the `k` nearest points, ascending. `skip` excludes
    /// one index (the query itself).
    pub(crate) fn knn_dist2(&self, q: &Point3, k: usize, skip: Option<usize>) -> Vec<f64> {
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        if k == 0 || self.points.is_empty() {
            return best;
        }
        let (cx, cy) = self.key(q);
        let max_ring = [
            cx - self.key_min.0,
            self.key_max.0 - cx,
            cy - self.key_min.1,
            self.key_max.1 - cy,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
        .max(0);
        let visit = |key: (i64, i64), best: &mut Vec<f64>| {
            for &i in self.bucket(key) {
                if Some(i as usize) == skip {
                    continue;
                }
                let d = self.metric.dist2(q, &self.points[i as usize]);
                if best.len() < k {
                    let at = best.partition_point(|&b| b <= d);
                    best.insert(at, d);
                } else if d < best[k - 1] {
                    best.pop();
                    let at = best.partition_point(|&b| b <= d);
                    best.insert(at, d);
                }
            }
        };
        for ring in 0..=max_ring {
            if ring == 0 {
                visit((cx, cy), &mut best);
            } else {
                for gx in cx - ring..=cx + ring {
                    visit((gx, cy - ring), &mut best);
                    visit((gx, cy + ring), &mut best);
                }
                for gy in cy - ring + 1..=cy + ring - 1 {
                    visit((cx - ring, gy), &mut best);
                    visit((cx + ring, gy), &mut best);
                }
            }
            if best.len() == k {
                let bound = ring as f64 * self.cell;
                if best[k - 1] <= bound * bound {
                    break;
                }
            }
        }
        best
    }

    /// Distance to the nearest indexed point.
    pub(crate) fn nearest_dist(&self, q: &Point3) -> Option<f64> {
        self.knn_dist2(q, 1, None).first().map(|d| d.sqrt())
    }
}
