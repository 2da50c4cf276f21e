//! Dominant ground-plane extraction with RANSAC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_plane_least_squares, Plane, Point3};

/// One LiDAR sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: String,
    /// Acquisition time in seconds.
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>, timestamp: f64) -> Self {
        Self {
            points,
            frame_id: frame_id.into(),
            timestamp,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn subset(&self, points: Vec<Point3>) -> Self {
        Self {
            points,
            frame_id: self.frame_id.clone(),
            timestamp: self.timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Point-to-plane distance in metres.
    pub inlier_threshold: f64,
    pub min_inliers_fraction: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            inlier_threshold: 0.05,
            min_inliers_fraction: 0.2,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("ransac max_iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidConfig("ransac inlier_threshold must be > 0".into()));
        }
        if !(self.min_inliers_fraction > 0.0 && self.min_inliers_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "ransac min_inliers_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundSplit {
    pub ground: PointCloud,
    pub non_ground: PointCloud,
    pub plane: Plane,
}

/// Probability that at least one all-inlier sample was drawn before stopping early.
const STOP_CONFIDENCE: f64 = 0.999;

fn required_iterations(inlier_fraction: f64) -> f64 {
    let all_inliers = inlier_fraction.powi(3);
    if all_inliers >= 1.0 {
        return 1.0;
    }
    if all_inliers <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - STOP_CONFIDENCE).ln() / (1.0 - all_inliers).ln()
}

fn count_inliers(points: &[Point3], plane: &Plane, threshold: f64) -> usize {
    points.iter().filter(|p| plane.distance(p) <= threshold).count()
}

/// Split `cloud` into ground and non-ground points.
///
/// Hypotheses come from three-point samples drawn with a ChaCha generator seeded
/// from `cfg.seed`; the best hypothesis is refined once by least squares on its
/// inliers and the final partition is taken against the refined plane.
pub fn extract_ground(cloud: &PointCloud, cfg: &RansacConfig) -> Result<GroundSplit> {
    cfg.validate()?;
    let points = &cloud.points;
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!(
            "ground extraction needs at least 3 points, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Plane, usize)> = None;
    let mut needed = cfg.max_iterations as f64;
    let mut iteration = 0usize;
    while iteration < cfg.max_iterations && (iteration as f64) < needed {
        iteration += 1;
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.random_range(0..n - 2);
        for taken in [a.min(b), a.max(b)] {
            if c >= taken {
                c += 1;
            }
        }
        let Some(plane) = Plane::through(&points[a], &points[b], &points[c]) else {
            continue;
        };
        let inliers = count_inliers(points, &plane, cfg.inlier_threshold);
        if best.is_none_or(|(_, count)| inliers > count) {
            best = Some((plane, inliers));
            needed = needed.min(required_iterations(inliers as f64 / n as f64));
        }
    }
    let Some((hypothesis, count)) = best else {
        return Err(Error::DegenerateInput("all samples were collinear".into()));
    };
    let fraction = count as f64 / n as f64;
    if fraction < cfg.min_inliers_fraction {
        return Err(Error::NoPlaneFound {
            fraction,
            required: cfg.min_inliers_fraction,
        });
    }

    let support: Vec<Point3> = points
        .iter()
        .copied()
        .filter(|p| hypothesis.distance(p) <= cfg.inlier_threshold)
        .collect();
    let plane = fit_plane_least_squares(&support).unwrap_or(hypothesis);

    let (ground, non_ground): (Vec<Point3>, Vec<Point3>) =
        points.iter().partition(|p| plane.distance(p) <= cfg.inlier_threshold);
    let fraction = ground.len() as f64 / n as f64;
    if fraction < cfg.min_inliers_fraction {
        return Err(Error::NoPlaneFound {
            fraction,
            required: cfg.min_inliers_fraction,
        });
    }
    Ok(GroundSplit {
        ground: cloud.subset(ground),
        non_ground: cloud.subset(non_ground),
        plane,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand_distr::{Distribution, Normal};

    fn noisy_scene(seed: u64) -> (PointCloud, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..900 {
            let x = rng.random_range(-10.0..10.0);
            let y = rng.random_range(-10.0..10.0);
            points.push(Point3::new(x, y, noise.sample(&mut rng), 60.0));
            truth.push(true);
        }
        for _ in 0..100 {
            let x = rng.random_range(-10.0..10.0);
            let y = rng.random_range(-10.0..10.0);
            points.push(Point3::new(x, y, rng.random_range(1.0..5.0), 30.0));
            truth.push(false);
        }
        (PointCloud::new(points, "0", 0.0), truth)
    }

    #[test]
    fn pure_plane_is_all_ground() {
        let points: Vec<_> = (0..1000)
            .map(|i| Point3::xyz((i % 40) as f64 * 0.25, (i / 40) as f64 * 0.25, 0.0))
            .collect();
        let split = extract_ground(&PointCloud::new(points, "a", 0.0), &RansacConfig::default()).unwrap();
        assert_eq!(split.ground.len(), 1000);
        assert!(split.non_ground.is_empty());
        assert!((split.plane.normal_vector() - Vector3::z()).norm() < 1e-9);
    }

    #[test]
    fn noisy_plane_with_outliers() {
        let (cloud, truth) = noisy_scene(42);
        // Oracle: count of points within threshold of the true plane z = 0.
        let oracle = cloud.points.iter().filter(|p| p.z.abs() <= 0.05).count();
        assert!(oracle >= 895 && truth.iter().filter(|&&t| t).count() == 900);
        let split = extract_ground(&cloud, &RansacConfig::default()).unwrap();
        let truth_plane = Plane {
            normal: [0.0, 0.0, 1.0],
            d: 0.0,
        };
        assert!(split.plane.angle_to(&truth_plane).to_degrees() < 1.0);
        assert!(split.ground.len() >= 850);
        assert_eq!(split.ground.len() + split.non_ground.len(), 1000);
        for p in &split.ground.points {
            assert!(split.plane.distance(p) <= 0.05);
        }
    }

    #[test]
    fn too_few_points() {
        let cloud = PointCloud::new(vec![Point3::default(), Point3::xyz(1.0, 0.0, 0.0)], "x", 0.0);
        assert!(matches!(
            extract_ground(&cloud, &RansacConfig::default()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn sparse_support_reports_no_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<_> = (0..200)
            .map(|_| {
                Point3::xyz(
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                )
            })
            .collect();
        let cfg = RansacConfig {
            min_inliers_fraction: 0.5,
            ..RansacConfig::default()
        };
        assert!(matches!(
            extract_ground(&PointCloud::new(points, "x", 0.0), &cfg),
            Err(Error::NoPlaneFound { .. })
        ));
    }

    #[test]
    fn same_seed_same_output() {
        let (cloud, _) = noisy_scene(7);
        let cfg = RansacConfig {
            seed: 99,
            ..RansacConfig::default()
        };
        let a = extract_ground(&cloud, &cfg).unwrap();
        let b = extract_ground(&cloud, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.plane.normal.map(f64::to_bits), b.plane.normal.map(f64::to_bits));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (cloud, _) = noisy_scene(1);
        for cfg in [
            RansacConfig {
                max_iterations: 0,
                ..Default::default()
            },
            RansacConfig {
                inlier_threshold: 0.0,
                ..Default::default()
            },
            RansacConfig {
                min_inliers_fraction: 1.5,
                ..Default::default()
            },
        ] {
            assert!(matches!(extract_ground(&cloud, &cfg), Err(Error::InvalidConfig(_))));
        }
    }
}
