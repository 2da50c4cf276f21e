use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::spatial::{GridIndex, Metric};

/// Points every `step` metres of arc length along `curve`, plus its last vertex.
///
/// A single-vertex curve yields that vertex.
pub fn resample_curve(curve: &[[f64; 2]], step: f64) -> Vec<[f64; 2]> {
    let Some(&first) = curve.first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    // Samples sit at exact multiples of `step` so no error accumulates.
    let mut start = 0.0;
    let mut k = 1usize;
    for seg in curve.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let end = start + len;
        while k as f64 * step <= end && len > 0.0 {
            let t = (k as f64 * step - start) / len;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            k += 1;
        }
        start = end;
    }
    let last = *curve.last().expect("non-empty");
    let tail = out.last().expect("non-empty");
    if (tail[0] - last[0]).hypot(tail[1] - last[1]) > 1e-12 {
        out.push(last);
    }
    out
}

const BRUTE_FORCE_LIMIT: usize = 512;

/// Mean distance from each sample of `pred` to the nearest sample of `gt`.
///
/// Both curves are resampled at `sample_step`. Pass polygon rings closed
/// (first vertex repeated) so their closing edge is sampled.
pub fn chamfer_one_way(pred: &[[f64; 2]], gt: &[[f64; 2]], sample_step: f64) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    if !(sample_step > 0.0) {
        return Err(Error::InvalidConfig("sample_step must be > 0".into()));
    }
    let to_point = |p: &[f64; 2]| Point3::xyz(p[0], p[1], 0.0);
    let c1: Vec<Point3> = resample_curve(pred, sample_step).iter().map(to_point).collect();
    let c2: Vec<Point3> = resample_curve(gt, sample_step).iter().map(to_point).collect();
    // A scan beats the grid when the target is short or far away.
    let sum: f64 = if c2.len() <= BRUTE_FORCE_LIMIT {
        c1.iter()
            .map(|q| c2.iter().map(|g| q.dist2_xy(g)).fold(f64::INFINITY, f64::min).sqrt())
            .sum()
    } else {
        let index = GridIndex::new(&c2, 0.5, Metric::Planar);
        c1.iter().map(|q| index.nearest_dist(q).expect("gt has samples")).sum()
    };
    Ok(sum / c1.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(pred: &[[f64; 2]], gt: &[[f64; 2]], step: f64) -> f64 {
        let c1 = resample_curve(pred, step);
        let c2 = resample_curve(gt, step);
        let total: f64 = c1
            .iter()
            .map(|p| {
                c2.iter()
                    .map(|q| {
                        Point3::xyz(p[0], p[1], 0.0)
                            .dist2_xy(&Point3::xyz(q[0], q[1], 0.0))
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / c1.len() as f64
    }

    #[test]
    fn resampling_spacing() {
        let s = resample_curve(&[[0.0, 0.0], [1.0, 0.0], [1.0, 0.55]], 0.1);
        assert_eq!(s.len(), 17);
        for w in s.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            assert!(d <= 0.1 + 1e-12);
        }
        assert_eq!(*s.last().unwrap(), [1.0, 0.55]);
        assert_eq!(resample_curve(&[[2.0, 3.0]], 0.1), vec![[2.0, 3.0]]);
    }

    #[test]
    fn identical_and_offset_segments() {
        let a = [[0.0, 0.0], [5.0, 0.0]];
        assert_eq!(chamfer_one_way(&a, &a, 0.1).unwrap(), 0.0);
        let b = [[0.0, 1.0], [5.0, 1.0]];
        assert!((chamfer_one_way(&a, &b, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(chamfer_one_way(&[], &b, 0.1), Err(Error::EmptyGeometry)));
    }

    #[test]
    fn random_polylines_match_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut line = |n: usize| -> Vec<[f64; 2]> {
                (0..n)
                    .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
                    .collect()
            };
            // Short targets take the scan, long ones the grid index.
            for g in [line(5), line(60)] {
                let p = line(4);
                let fast = chamfer_one_way(&p, &g, 0.1).unwrap();
                assert!((fast - brute_force(&p, &g, 0.1)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_sample_on_gt_has_zero_distance() {
        let gt = [[0.0, 0.0], [4.0, 0.0]];
        assert_eq!(chamfer_one_way(&[[2.0, 0.0]], &gt, 0.1).unwrap(), 0.0);
    }
}
