use nalgebra::{Matrix2, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Principal axes of a planar point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxis {
    pub centroid: [f64; 2],
    /// Unit major direction, oriented towards +x (or +y when vertical).
    pub direction: [f64; 2],
    pub major_variance: f64,
    pub minor_variance: f64,
}

impl PrincipalAxis {
    pub fn project(&self, p: &Point3) -> f64 {
        (p.x - self.centroid[0]) * self.direction[0] + (p.y - self.centroid[1]) * self.direction[1]
    }

    /// Minimum and maximum projection of `points` on the major axis.
    pub fn extent(&self, points: &[Point3]) -> (f64, f64) {
        points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
            let t = self.project(p);
            (lo.min(t), hi.max(t))
        })
    }

    pub fn point_at(&self, t: f64) -> [f64; 2] {
        [
            self.centroid[0] + t * self.direction[0],
            self.centroid[1] + t * self.direction[1],
        ]
    }

    /// Standard deviation across the major axis.
    pub fn minor_spread(&self) -> f64 {
        self.minor_variance.max(0.0).sqrt()
    }
}

/// Eigen-decomposition of the centred xy covariance. `None` for an empty set.
pub fn principal_axis(points: &[Point3]) -> Option<PrincipalAxis> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let cov = Matrix2::new(sxx / n, sxy / n, sxy / n, syy / n);
    let eigen = SymmetricEigen::new(cov);
    let (major, minor) = if eigen.eigenvalues[0] >= eigen.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let v = eigen.eigenvectors.column(major);
    let norm = v.norm();
    let mut d = [v[0] / norm, v[1] / norm];
    if d[0] < 0.0 || (d[0] == 0.0 && d[1] < 0.0) {
        d = [-d[0], -d[1]];
    }
    Some(PrincipalAxis {
        centroid: [cx, cy],
        direction: d,
        major_variance: eigen.eigenvalues[major],
        minor_variance: eigen.eigenvalues[minor],
    })
}

/// Orthogonal least-squares segment through a cluster, spanning the
/// projections of its extreme points.
pub fn fit_line_segment(cluster: &[Point3]) -> Result<[[f64; 2]; 2]> {
    if cluster.len() < 2 {
        return Err(Error::DegenerateCluster(format!(
            "line fit needs at least 2 points, got {}",
            cluster.len()
        )));
    }
    let axis = principal_axis(cluster).expect("non-empty cluster");
    if !(axis.major_variance > 0.0) {
        return Err(Error::DegenerateCluster("cluster has zero spread".into()));
    }
    let (lo, hi) = axis.extent(cluster);
    Ok([axis.point_at(lo), axis.point_at(hi)])
}
