//! Coordinate types, the pinhole camera model and BEV grid indexing.
//!
//! Projection follows the composed pinhole form
//!
//! ```text
//! [Xc Yc Zc]^T = R · [X Y Z]^T + T
//! u = (f / dx) · Xc / Zc + u0
//! v = (f / dy) · Yc / Zc + v0
//! ```
//!
//! Grid cells are half-open: a point exactly on a cell boundary belongs to the
//! upper cell.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth below which a point is treated as not imageable.
pub const MIN_DEPTH: f64 = 1e-6;

/// A LiDAR return: position in metres plus reflective intensity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub const fn xyz(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.intensity.is_finite()
            && self.intensity >= 0.0
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn dist2_xy(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist2(&self, other: &Point3) -> f64 {
        let dz = self.z - other.z;
        self.dist2_xy(other) + dz * dz
    }

    /// Total order over (x, y, z, intensity), used for canonical sorting.
    pub fn total_cmp(&self, other: &Point3) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.z.total_cmp(&other.z))
            .then(self.intensity.total_cmp(&other.intensity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

/// Result of projecting a point: pixel position and camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: PixelCoord,
    pub depth: f64,
}

/// Intrinsic and extrinsic camera parameters.
///
/// `rotation` and `translation` map world coordinates into the camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    pub f: f64,
    pub dx: f64,
    pub dy: f64,
    pub u0: f64,
    pub v0: f64,
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "T")]
    pub translation: [f64; 3],
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraCalibration {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rotation)
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.translation)
    }

    pub fn fx(&self) -> f64 {
        self.f / self.dx
    }

    pub fn fy(&self) -> f64 {
        self.f / self.dy
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.f > 0.0 && self.f.is_finite()) {
            problems.push(format!("f must be positive, got {}", self.f));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            problems.push(format!("dx, dy must be positive, got {}, {}", self.dx, self.dy));
        }
        if self.image_width == 0 || self.image_height == 0 {
            problems.push("image dimensions must be positive".to_string());
        }
        let r = self.rotation_matrix();
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if orth > 1e-6 || (det - 1.0).abs() > 1e-6 {
            problems.push(format!(
                "R is not a proper rotation (orthogonality error {orth:.2e}, det {det:.6})"
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("calibration: {}", problems.join("; "))))
        }
    }

    /// Camera centre in world coordinates, `-R^T T`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// World-frame direction of the ray through pixel `(u, v)`, not normalized.
    pub fn pixel_ray(&self, pixel: PixelCoord) -> Vector3<f64> {
        let cam = Vector3::new((pixel.u - self.u0) / self.fx(), (pixel.v - self.v0) / self.fy(), 1.0);
        self.rotation_matrix().transpose() * cam
    }

    /// Inverse of [`project_point`] given the depth returned by the projection.
    pub fn back_project(&self, projection: &Projection) -> Vector3<f64> {
        let z = projection.depth;
        let cam = Vector3::new(
            (projection.pixel.u - self.u0) / self.fx() * z,
            (projection.pixel.v - self.v0) / self.fy() * z,
            z,
        );
        self.rotation_matrix().transpose() * (cam - self.translation_vector())
    }

    /// Intersect the ray through `pixel` with the plane `z = ground_z`.
    pub fn ground_hit(&self, pixel: PixelCoord, ground_z: f64) -> Option<Vector3<f64>> {
        let origin = self.camera_center();
        let dir = self.pixel_ray(pixel);
        if dir.z.abs() < 1e-12 {
            return None;
        }
        let t = (ground_z - origin.z) / dir.z;
        (t > 0.0).then(|| origin + dir * t)
    }

    /// Build a calibration for a camera at `position` looking along `yaw`
    /// (radians, from +x towards +y) and pitched down by `pitch` radians.
    pub fn looking_at(
        position: Vector3<f64>,
        yaw: f64,
        pitch: f64,
        f: f64,
        pixel_size: f64,
        image_width: u32,
        image_height: u32,
    ) -> Self {
        // Camera axes in world: forward (z_c), right (x_c), down (y_c).
        let forward = Vector3::new(yaw.cos() * pitch.cos(), yaw.sin() * pitch.cos(), -pitch.sin());
        let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * position);
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        Self {
            f,
            dx: pixel_size,
            dy: pixel_size,
            u0: image_width as f64 / 2.0,
            v0: image_height as f64 / 2.0,
            rotation,
            translation: [t.x, t.y, t.z],
            image_width,
            image_height,
        }
    }
}

/// Project a world point into continuous pixel coordinates.
pub fn project_point(p: &Point3, calib: &CameraCalibration) -> Result<Projection> {
    let cam = calib.rotation_matrix() * p.position() + calib.translation_vector();
    if cam.z <= MIN_DEPTH {
        return Err(Error::BehindCamera { depth: cam.z });
    }
    Ok(Projection {
        pixel: PixelCoord {
            u: calib.fx() * cam.x / cam.z + calib.u0,
            v: calib.fy() * cam.y / cam.z + calib.v0,
        },
        depth: cam.z,
    })
}

/// Regular BEV grid. Column index grows with x, row index with y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub y_min: f64,
    pub cell_size_x: f64,
    pub cell_size_y: f64,
    pub cols: usize,
    pub rows: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, y_min: f64, cell_size: f64, cols: usize, rows: usize) -> Self {
        Self {
            x_min,
            y_min,
            cell_size_x: cell_size,
            cell_size_y: cell_size,
            cols,
            rows,
        }
    }

    /// Smallest grid anchored at the minimum x/y of `points` covering all of them.
    pub fn covering<'a>(points: impl IntoIterator<Item = &'a Point3>, cell_size: f64) -> Option<Self> {
        let mut bounds: Option<[f64; 4]> = None;
        for p in points {
            let b = bounds.get_or_insert([p.x, p.y, p.x, p.y]);
            b[0] = b[0].min(p.x);
            b[1] = b[1].min(p.y);
            b[2] = b[2].max(p.x);
            b[3] = b[3].max(p.y);
        }
        let [x0, y0, x1, y1] = bounds?;
        let cols = ((x1 - x0) / cell_size).floor() as usize + 1;
        let rows = ((y1 - y0) / cell_size).floor() as usize + 1;
        Some(Self::new(x0, y0, cell_size, cols, rows))
    }

    /// Like [`GridSpec::covering`] but with the origin on a multiple of
    /// `cell_size`, so grids built from overlapping point sets share cell edges.
    pub fn aligned_covering<'a>(points: impl IntoIterator<Item = &'a Point3>, cell_size: f64) -> Option<Self> {
        let tight = Self::covering(points, cell_size)?;
        let snap = |v: f64| {
            let s = (v / cell_size).floor() * cell_size;
            if s > v {
                s - cell_size
            } else {
                s
            }
        };
        let (x0, y0) = (snap(tight.x_min), snap(tight.y_min));
        let x1 = tight.x_min + (tight.cols - 1) as f64 * cell_size;
        let y1 = tight.y_min + (tight.rows - 1) as f64 * cell_size;
        let cols = ((x1 - x0) / cell_size).floor() as usize + 2;
        let rows = ((y1 - y0) / cell_size).floor() as usize + 2;
        Some(Self::new(x0, y0, cell_size, cols, rows))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.x_min.is_finite() && self.y_min.is_finite();
        if !finite || !(self.cell_size_x > 0.0) || !(self.cell_size_y > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid grid spec {self:?}")));
        }
        if self.cols == 0 || self.rows == 0 {
            return Err(Error::InvalidConfig("grid must have at least one cell".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.cols as f64 * self.cell_size_x
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.rows as f64 * self.cell_size_y
    }

    /// Unbounded cell coordinates of `(x, y)`.
    pub fn raw_index(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.x_min) / self.cell_size_x).floor() as i64,
            ((y - self.y_min) / self.cell_size_y).floor() as i64,
        )
    }

    /// Row-major linear index of an in-grid point.
    pub fn linear_index(&self, x: f64, y: f64) -> Option<usize> {
        let (c, r) = self.raw_index(x, y);
        (c >= 0 && r >= 0 && (c as usize) < self.cols && (r as usize) < self.rows)
            .then(|| r as usize * self.cols + c as usize)
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.x_min + (col as f64 + 0.5) * self.cell_size_x,
            self.y_min + (row as f64 + 0.5) * self.cell_size_y,
        )
    }
}

/// Grid cell `(col, row)` containing `p`.
pub fn grid_index(p: &Point3, spec: &GridSpec) -> Result<(usize, usize)> {
    let (col, row) = spec.raw_index(p.x, p.y);
    if col < 0 || row < 0 || col as usize >= spec.cols || row as usize >= spec.rows {
        return Err(Error::OutOfGrid { col, row });
    }
    Ok((col as usize, row as usize))
}

/// Plane `normal · p + d = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub d: f64,
}

impl Plane {
    /// Plane through three points, or `None` when they are (nearly) collinear.
    pub fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b.position() - a.position()).cross(&(c.position() - a.position()));
        let norm = n.norm();
        if !(norm > 1e-12) {
            return None;
        }
        let n = oriented(n / norm);
        Some(Self {
            normal: [n.x, n.y, n.z],
            d: -n.dot(&a.position()),
        })
    }

    pub fn normal_vector(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.normal)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z + self.d
    }

    pub fn distance(&self, p: &Point3) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Angle in radians between the two planes' normals, ignoring sign.
    pub fn angle_to(&self, other: &Plane) -> f64 {
        let c = self.normal_vector().dot(&other.normal_vector()).abs().min(1.0);
        c.acos()
    }
}

/// Flip `n` so that z > 0, breaking ties by y then x.
fn oriented(n: Vector3<f64>) -> Vector3<f64> {
    const TIE: f64 = 1e-12;
    let flip = if n.z.abs() > TIE {
        n.z < 0.0
    } else if n.y.abs() > TIE {
        n.y < 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

/// Orthogonal least-squares plane through `points`.
pub fn fit_plane_least_squares(points: &[Point3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.position()) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let q = p.position() - centroid;
        cov += q * q.transpose();
    }
    cov /= n;
    let eigen = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let (middle, largest) = (eigen.eigenvalues[order[1]], eigen.eigenvalues[order[2]]);
    if !(largest > 0.0) || middle <= largest * 1e-12 {
        return Err(Error::DegenerateInput("points are collinear or coincident".into()));
    }
    let normal = oriented(eigen.eigenvectors.column(order[0]).normalize());
    Ok(Plane {
        normal: [normal.x, normal.y, normal.z],
        d: -normal.dot(&centroid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_calib() -> CameraCalibration {
        CameraCalibration {
            f: 1.0,
            dx: 1.0,
            dy: 1.0,
            u0: 0.0,
            v0: 0.0,
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
            image_width: 100,
            image_height: 100,
        }
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = project_point(&Point3::xyz(0.0, 0.0, 5.0), &unit_calib()).unwrap();
        assert_eq!((p.pixel.u, p.pixel.v), (0.0, 0.0));
        assert_eq!(p.depth, 5.0);
    }

    #[test]
    fn off_axis_projection() {
        // u = 1/5, v = 2/5 by hand.
        let p = project_point(&Point3::xyz(1.0, 2.0, 5.0), &unit_calib()).unwrap();
        assert!((p.pixel.u - 0.2).abs() < 1e-15);
        assert!((p.pixel.v - 0.4).abs() < 1e-15);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let err = project_point(&Point3::xyz(0.0, 0.0, -1.0), &unit_calib()).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
        let err = project_point(&Point3::xyz(0.0, 0.0, 0.0), &unit_calib()).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
    }

    #[test]
    fn calibration_validation() {
        let mut c = unit_calib();
        assert!(c.validate().is_ok());
        c.rotation[0] = 2.0;
        assert!(c.validate().is_err());
        let mut c = unit_calib();
        c.f = 0.0;
        assert!(c.validate().is_err());
        let mut c = unit_calib();
        c.rotation = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
        assert!(c.validate().is_err(), "reflection must be rejected");
    }

    #[test]
    fn looking_at_centres_its_target() {
        let pos = Vector3::<f64>::new(-20.0, -20.0, 6.0);
        let target = Vector3::<f64>::new(10.0, 10.0, 0.0);
        let d = target - pos;
        let yaw = d.y.atan2(d.x);
        let pitch = (-d.z).atan2(d.xy().norm());
        let calib = CameraCalibration::looking_at(pos, yaw, pitch, 0.004, 4e-6, 1280, 720);
        calib.validate().unwrap();
        let p = project_point(&Point3::xyz(target.x, target.y, target.z), &calib).unwrap();
        assert!((p.pixel.u - 640.0).abs() < 1e-6);
        assert!((p.pixel.v - 360.0).abs() < 1e-6);
        // A point to the right of the view direction lands right of centre.
        let right = target + Vector3::new(1.0, -1.0, 0.0);
        let p = project_point(&Point3::xyz(right.x, right.y, 0.0), &calib).unwrap();
        assert!(p.pixel.u > 640.0);
        let hit = calib.ground_hit(PixelCoord { u: 640.0, v: 360.0 }, 0.0).unwrap();
        assert!((hit - target).norm() < 1e-6);
    }

    #[test]
    fn grid_boundaries_use_floor() {
        let spec = GridSpec::new(0.0, 0.0, 0.01, 100, 100);
        assert_eq!(grid_index(&Point3::xyz(0.005, 0.0, 0.0), &spec).unwrap().0, 0);
        assert_eq!(grid_index(&Point3::xyz(0.0, 0.0, 0.0), &spec).unwrap().0, 0);
        assert_eq!(grid_index(&Point3::xyz(0.01, 0.0, 0.0), &spec).unwrap().0, 1);
    }

    #[test]
    fn grid_index_matches_boundary_scan() {
        let spec = GridSpec::new(-1.0, -1.0, 0.5, 10, 10);
        // Cell boundaries at -1.0, -0.5, 0.0, 0.5: 0.3 sits after the third.
        let boundaries: Vec<f64> = (0..=10).map(|i| -1.0 + 0.5 * i as f64).collect();
        let expected = boundaries.iter().filter(|&&b| b <= 0.3).count() - 1;
        assert_eq!(expected, 2);
        assert_eq!(grid_index(&Point3::xyz(0.3, 0.3, 0.0), &spec).unwrap(), (2, 2));
    }

    #[test]
    fn grid_rejects_outside_points() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 2, 3);
        assert!(matches!(
            grid_index(&Point3::xyz(-0.1, 0.0, 0.0), &spec),
            Err(Error::OutOfGrid { col: -1, row: 0 })
        ));
        assert!(grid_index(&Point3::xyz(2.0, 0.0, 0.0), &spec).is_err());
        assert!(grid_index(&Point3::xyz(1.9, 2.9, 0.0), &spec).is_ok());
        assert!(grid_index(&Point3::xyz(0.0, 3.0, 0.0), &spec).is_err());
    }

    #[test]
    fn plane_fit_on_exact_planes() {
        let pts: Vec<_> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Point3::xyz(i as f64, j as f64, 0.0)))
            .collect();
        let plane = fit_plane_least_squares(&pts).unwrap();
        assert!((plane.normal_vector() - Vector3::z()).norm() < 1e-12);
        assert!(plane.d.abs() < 1e-12);

        let lifted: Vec<_> = pts.iter().map(|p| Point3::xyz(p.x, p.y, 2.0)).collect();
        let plane = fit_plane_least_squares(&lifted).unwrap();
        assert!((plane.normal_vector() - Vector3::z()).norm() < 1e-12);
        assert!((plane.d + 2.0).abs() < 1e-12);
    }

    #[test]
    fn plane_fit_rejects_degenerate_input() {
        let two = [Point3::xyz(0.0, 0.0, 0.0), Point3::xyz(1.0, 0.0, 0.0)];
        assert!(matches!(fit_plane_least_squares(&two), Err(Error::DegenerateInput(_))));
        let line: Vec<_> = (0..10).map(|i| Point3::xyz(i as f64, 2.0 * i as f64, 0.5)).collect();
        assert!(matches!(fit_plane_least_squares(&line), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn vertical_plane_orientation_ties() {
        // Plane x = 1: normal has no z or y component, so +x is chosen.
        let pts: Vec<_> = (0..4)
            .flat_map(|i| (0..4).map(move |j| Point3::xyz(1.0, i as f64, j as f64)))
            .collect();
        let plane = fit_plane_least_squares(&pts).unwrap();
        assert!((plane.normal_vector() - Vector3::x()).norm() < 1e-12);
        assert!((plane.d + 1.0).abs() < 1e-12);
    }
}
