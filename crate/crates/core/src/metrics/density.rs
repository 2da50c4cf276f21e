use serde::{Deserialize, Serialize};

use crate::geometry::{GridSpec, Point3};
use crate::ground::PointCloud;

/// Ground-point density in one ring around the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
    /// Ring area inside the region (m²).
    pub area: f64,
    /// Points per m²; 0 where the ring misses the region.
    pub density: f64,
}

/// Default distance bins, 15 to 65 m in 10 m steps.
pub const DEFAULT_BINS: [(f64, f64); 5] = [(15.0, 25.0), (25.0, 35.0), (35.0, 45.0), (45.0, 55.0), (55.0, 65.0)];

/// Area of the disk of radius `r` centred at the origin intersected with the
/// rectangle `[x0, x1] × [y0, y1]`.
pub fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    if r <= 0.0 || x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let (lo, hi) = (x0.max(-r), x1.min(r));
    if hi <= lo {
        return 0.0;
    }
    let half_chord = |x: f64| (r * r - x * x).max(0.0).sqrt();
    // Antiderivative of the half chord.
    let g = |x: f64| {
        let x = x.clamp(-r, r);
        0.5 * (x * half_chord(x) + r * r * (x / r).asin())
    };
    // Break where the chord meets a horizontal edge so each piece has fixed bounds.
    let mut xs = vec![lo, hi];
    for y in [y0, y1] {
        if y.abs() < r {
            let b = (r * r - y * y).sqrt();
            xs.extend([-b, b].into_iter().filter(|&x| x > lo && x < hi));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let s = half_chord(0.5 * (a + b));
            let upper_is_arc = s < y1;
            let lower_is_arc = -s > y0;
            let top = if upper_is_arc { s } else { y1 };
            let bottom = if lower_is_arc { -s } else { y0 };
            if top <= bottom {
                return 0.0;
            }
            let arc = g(b) - g(a);
            let up = if upper_is_arc { arc } else { y1 * (b - a) };
            let down = if lower_is_arc { -arc } else { y0 * (b - a) };
            up - down
        })
        .sum()
}

/// Count ground points per distance ring around `origin` (planar distance,
/// ring `[r_min, r_max)`) and divide by the ring's area inside `region`.
pub fn density_by_distance(
    cloud: &PointCloud,
    origin: &Point3,
    bins: &[(f64, f64)],
    region: &GridSpec,
) -> Vec<DensityRow> {
    let inside =
        |p: &Point3| p.x >= region.x_min && p.x < region.x_max() && p.y >= region.y_min && p.y < region.y_max();
    let (x0, x1) = (region.x_min - origin.x, region.x_max() - origin.x);
    let (y0, y1) = (region.y_min - origin.y, region.y_max() - origin.y);
    bins.iter()
        .map(|&(r_min, r_max)| {
            let points = cloud
                .points
                .iter()
                .filter(|p| inside(p))
                .filter(|p| {
                    let d = p.dist2_xy(origin).sqrt();
                    d >= r_min && d < r_max
                })
                .count();
            let area = disk_rect_area(r_max, x0, x1, y0, y1) - disk_rect_area(r_min, x0, x1, y0, y1);
            let density = if area > 0.0 { points as f64 / area } else { 0.0 };
            DensityRow {
                r_min,
                r_max,
                points,
                area,
                density,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Midpoint-rule integral of the clipped vertical chord.
    fn integrated_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let n = 200_000;
        let h = (x1 - x0) / n as f64;
        (0..n)
            .map(|i| {
                let x = x0 + (i as f64 + 0.5) * h;
                let s = (r * r - x * x).max(0.0).sqrt();
                (y1.min(s) - y0.max(-s)).max(0.0) * h
            })
            .sum()
    }

    #[test]
    fn whole_and_partial_disks() {
        assert!((disk_rect_area(1.0, -5.0, 5.0, -5.0, 5.0) - PI).abs() < 1e-12);
        assert!((disk_rect_area(1.0, 0.0, 5.0, -5.0, 5.0) - PI / 2.0).abs() < 1e-12);
        assert!((disk_rect_area(1.0, 0.0, 5.0, 0.0, 5.0) - PI / 4.0).abs() < 1e-12);
        assert_eq!(disk_rect_area(1.0, 2.0, 3.0, 0.0, 1.0), 0.0);
        assert!((disk_rect_area(10.0, -1.0, 1.0, -1.0, 1.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn matches_cell_count_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let r = rng.random_range(0.5..3.0);
            let x0 = rng.random_range(-3.0..1.0);
            let y0 = rng.random_range(-3.0..1.0);
            let (x1, y1) = (x0 + rng.random_range(0.5..3.0), y0 + rng.random_range(0.5..3.0));
            let exact = disk_rect_area(r, x0, x1, y0, y1);
            let approx = integrated_area(r, x0, x1, y0, y1);
            assert!((exact - approx).abs() < 1e-6, "{exact} vs {approx}");
        }
    }

    #[test]
    fn empty_cloud_gives_zero_density() {
        let region = GridSpec::new(-70.0, -70.0, 1.0, 140, 140);
        let rows = density_by_distance(
            &PointCloud::default(),
            &Point3::xyz(0.0, 0.0, 0.0),
            &DEFAULT_BINS,
            &region,
        );
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.density == 0.0 && r.area > 0.0));
    }

    fn sample(n: usize, seed: u64, keep: impl Fn(f64, &mut ChaCha8Rng) -> bool) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        while pts.len() < n {
            let (x, y): (f64, f64) = (rng.random_range(-20.0..70.0), rng.random_range(-30.0..40.0));
            if keep((x * x + y * y).sqrt(), &mut rng) {
                pts.push(Point3::xyz(x, y, 0.0));
            }
        }
        PointCloud::new(pts, "t", 0.0)
    }

    #[test]
    fn uniform_density_is_recovered() {
        // Region cuts the rings, so the exact area matters.
        let region = GridSpec::new(-20.0, -30.0, 1.0, 90, 70);
        let cloud = sample(63_000, 1, |_, _| true);
        for row in density_by_distance(&cloud, &Point3::xyz(0.0, 0.0, 0.0), &DEFAULT_BINS, &region) {
            assert!((row.density - 10.0).abs() < 1.0, "{row:?}");
        }
    }

    #[test]
    fn inverse_square_falloff_is_decreasing() {
        let region = GridSpec::new(-20.0, -30.0, 1.0, 90, 70);
        let cloud = sample(40_000, 2, |r, rng| rng.random::<f64>() < (10.0 / r.max(10.0)).powi(2));
        let rows = density_by_distance(&cloud, &Point3::xyz(0.0, 0.0, 0.0), &DEFAULT_BINS, &region);
        for w in rows.windows(2) {
            assert!(w[1].density < w[0].density, "{rows:?}");
        }
    }
}
