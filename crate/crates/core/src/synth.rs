//! Deterministic synthetic intersections.
//!
//! A [`SceneSpec`] describes a crossroads with zebra crossings, stop lines and
//! dashed lane dividers on each arm, a roadside sensor mast carrying a camera
//! and a LiDAR at the same position, and the degradations applied to each
//! sensor. [`generate_scene`] turns it into ground truth, LiDAR frames, camera
//! label masks and the camera calibration.
//!
//! Arm geometry is built in arm-local coordinates `(u, v)` (`u` away from the
//! centre, `v` to the left of `u`) and rotated by exact quarter turns, so
//! element coordinates carry no rounding error.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{ClassTable, ElementClass, BACKGROUND_ID};
use crate::error::{Error, Result};
use crate::geometry::{CameraCalibration, PixelCoord, Point3};
use crate::ground::PointCloud;
use crate::io;
use crate::raster::LabelMask;
use crate::vectorize::{Geometry, MapElement, VectorMap, DEFAULT_CRS_NOTE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadSpec {
    /// Number of arms, 1 to 4, in the order +x, +y, -x, -y.
    pub arms: usize,
    pub lanes_per_direction: usize,
    pub lane_width: f64,
    /// Distance from the centre to the end of each arm; also the half-size of
    /// the ground square.
    pub arm_length: f64,
    /// Gap between the junction box and the crossing.
    pub crossing_offset: f64,
    /// Crossing extent along the arm.
    pub crossing_length: f64,
    pub stripe_width: f64,
    pub stripe_gap: f64,
    /// Gap between the crossing and the stop line.
    pub stop_line_gap: f64,
    pub stop_line_width: f64,
    /// Stop-line setback from the road centre and from the kerb.
    pub stop_line_inset: f64,
    /// Gap between the stop line and the first divider dash.
    pub divider_gap: f64,
    pub divider_width: f64,
    pub dash_length: f64,
    pub dash_gap: f64,
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self {
            arms: 4,
            lanes_per_direction: 2,
            lane_width: 3.5,
            arm_length: 55.0,
            crossing_offset: 1.0,
            crossing_length: 4.0,
            stripe_width: 0.5,
            stripe_gap: 0.4,
            stop_line_gap: 1.0,
            stop_line_width: 0.4,
            stop_line_inset: 0.3,
            divider_gap: 1.0,
            divider_width: 0.15,
            dash_length: 3.0,
            dash_gap: 6.0,
        }
    }
}

impl RoadSpec {
    fn half_road(&self) -> f64 {
        self.lanes_per_direction as f64 * self.lane_width
    }
}

/// Mast pose and camera intrinsics. The camera looks at `target` on the
/// ground; its tilt follows from `height` and the target distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    pub position: [f64; 2],
    pub height: f64,
    pub target: [f64; 2],
    pub focal_length: f64,
    pub pixel_size: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            position: [-12.0, -12.0],
            height: 6.0,
            target: [6.0, 6.0],
            focal_length: 0.0035,
            pixel_size: 4e-6,
            image_width: 1280,
            image_height: 720,
        }
    }
}

impl SensorSpec {
    pub fn calibration(&self) -> CameraCalibration {
        let [sx, sy] = self.position;
        let (dx, dy) = (self.target[0] - sx, self.target[1] - sy);
        let yaw = dy.atan2(dx);
        let pitch = self.height.atan2(dx.hypot(dy));
        CameraCalibration::looking_at(
            Vector3::new(sx, sy, self.height),
            yaw,
            pitch,
            self.focal_length,
            self.pixel_size,
            self.image_width,
            self.image_height,
        )
    }

    /// LiDAR origin; shared with the camera.
    pub fn origin(&self) -> Point3 {
        Point3::xyz(self.position[0], self.position[1], self.height)
    }
}

/// Ground-return density `d(r) = points_per_m2 * (reference_distance / max(r, reference_distance))^falloff_exponent`
/// per frame, with `r` the planar distance to the mast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySpec {
    pub points_per_m2: f64,
    pub reference_distance: f64,
    pub falloff_exponent: f64,
    /// No ground returns beyond this planar range.
    pub max_range: f64,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self {
            points_per_m2: 60.0,
            reference_distance: 10.0,
            falloff_exponent: 2.0,
            max_range: 70.0,
        }
    }
}

impl DensitySpec {
    pub fn at(&self, r: f64) -> f64 {
        let r_ref = self.reference_distance;
        self.points_per_m2 * (r_ref / r.max(r_ref)).powf(self.falloff_exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntensitySpec {
    pub paint: f64,
    pub asphalt: f64,
    pub noise_sigma: f64,
    /// Standard deviation of ground-point height (m).
    pub height_noise: f64,
}

impl Default for IntensitySpec {
    fn default() -> Self {
        Self {
            paint: 200.0,
            asphalt: 60.0,
            noise_sigma: 5.0,
            height_noise: 0.01,
        }
    }
}

/// Parked vehicles: non-ground returns for the ground filter to reject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterSpec {
    pub vehicles: usize,
    pub points_per_vehicle: usize,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self {
            vehicles: 6,
            points_per_vehicle: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationSpec {
    /// Blur window half-size in pixels per metre of distance beyond `blur_start`.
    pub blur_px_per_m: f64,
    pub blur_start: f64,
    /// Share of the blur window a class must fill to survive.
    pub blur_keep_fraction: f64,
    pub occlusions_per_frame: usize,
    pub occlusion_width: u32,
    pub occlusion_height: u32,
    /// Camera timestamps are offset uniformly within ±`sync_jitter` seconds.
    pub sync_jitter: f64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            blur_px_per_m: 0.1,
            blur_start: 30.0,
            blur_keep_fraction: 0.5,
            occlusions_per_frame: 2,
            occlusion_width: 160,
            occlusion_height: 120,
            sync_jitter: 0.005,
        }
    }
}

impl DegradationSpec {
    pub fn none() -> Self {
        Self {
            blur_px_per_m: 0.0,
            blur_start: 0.0,
            blur_keep_fraction: 0.5,
            occlusions_per_frame: 0,
            occlusion_width: 0,
            occlusion_height: 0,
            sync_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: usize,
    /// Seconds between LiDAR sweeps.
    pub frame_interval: f64,
    pub road: RoadSpec,
    pub sensor: SensorSpec,
    pub density: DensitySpec,
    pub intensity: IntensitySpec,
    pub clutter: ClutterSpec,
    pub degradation: DegradationSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            frames: 10,
            frame_interval: 0.1,
            road: RoadSpec::default(),
            sensor: SensorSpec::default(),
            density: DensitySpec::default(),
            intensity: IntensitySpec::default(),
            clutter: ClutterSpec::default(),
            degradation: DegradationSpec::default(),
        }
    }
}

impl SceneSpec {
    /// A compact noise-free scene: uniform density, no intensity or height
    /// noise, no degradations.
    pub fn clean() -> Self {
        Self {
            road: RoadSpec {
                arm_length: 30.0,
                ..RoadSpec::default()
            },
            density: DensitySpec {
                points_per_m2: 60.0,
                falloff_exponent: 0.0,
                max_range: 100.0,
                ..DensitySpec::default()
            },
            intensity: IntensitySpec {
                noise_sigma: 0.0,
                height_noise: 0.0,
                ..IntensitySpec::default()
            },
            degradation: DegradationSpec::none(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be a positive number, got {v}"));
            }
        };
        let r = &self.road;
        positive("frame_interval", self.frame_interval);
        positive("road.lane_width", r.lane_width);
        positive("road.arm_length", r.arm_length);
        positive("road.crossing_offset", r.crossing_offset);
        positive("road.crossing_length", r.crossing_length);
        positive("road.stripe_width", r.stripe_width);
        positive("road.stripe_gap", r.stripe_gap);
        positive("road.stop_line_gap", r.stop_line_gap);
        positive("road.stop_line_width", r.stop_line_width);
        positive("road.stop_line_inset", r.stop_line_inset);
        positive("road.divider_gap", r.divider_gap);
        positive("road.divider_width", r.divider_width);
        positive("road.dash_length", r.dash_length);
        positive("road.dash_gap", r.dash_gap);
        positive("sensor.height", self.sensor.height);
        positive("sensor.focal_length", self.sensor.focal_length);
        positive("sensor.pixel_size", self.sensor.pixel_size);
        positive("density.points_per_m2", self.density.points_per_m2);
        positive("density.reference_distance", self.density.reference_distance);
        positive("density.max_range", self.density.max_range);
        let mut non_negative = |name: &str, v: f64| {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be >= 0, got {v}"));
            }
        };
        non_negative("density.falloff_exponent", self.density.falloff_exponent);
        non_negative("intensity.noise_sigma", self.intensity.noise_sigma);
        non_negative("intensity.height_noise", self.intensity.height_noise);
        non_negative("degradation.blur_px_per_m", self.degradation.blur_px_per_m);
        non_negative("degradation.blur_start", self.degradation.blur_start);

        non_negative("degradation.sync_jitter", self.degradation.sync_jitter);
        let keep = self.degradation.blur_keep_fraction;
        if !(keep > 0.0 && keep <= 1.0) {
            bad.push(format!("degradation.blur_keep_fraction must be in (0, 1], got {keep}"));
        }
        if self.frames == 0 {
            bad.push("frames must be >= 1".into());
        }
        if !(1..=4).contains(&r.arms) {
            bad.push(format!("road.arms must be 1 to 4, got {}", r.arms));
        }
        if r.lanes_per_direction == 0 {
            bad.push("road.lanes_per_direction must be >= 1".into());
        }
        for (name, v) in [
            ("intensity.paint", self.intensity.paint),
            ("intensity.asphalt", self.intensity.asphalt),
        ] {
            if !(0.0..=255.0).contains(&v) {
                bad.push(format!("{name} must be within 0..=255, got {v}"));
            }
        }
        if self.sensor.image_width == 0 || self.sensor.image_height == 0 {
            bad.push("sensor image size must be positive".into());
        }
        if self.sensor.position == self.sensor.target {
            bad.push("sensor.target must differ from sensor.position".into());
        }
        // Derived constraints only make sense once the fields themselves are valid.
        if bad.is_empty() && 2.0 * r.stop_line_inset >= r.half_road() {
            bad.push("road.stop_line_inset leaves no stop line".into());
        }
        if bad.is_empty() && first_dash_start(r) >= r.arm_length {
            bad.push("road.arm_length is too short to hold the markings".into());
        }
        let d = &self.degradation;
        if d.occlusions_per_frame > 0 && (d.occlusion_width == 0 || d.occlusion_height == 0) {
            bad.push("degradation occlusion size must be positive when occlusions are enabled".into());
        }
        if d.sync_jitter >= self.frame_interval {
            bad.push("degradation.sync_jitter must be below frame_interval".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(bad))
        }
    }
}

fn first_dash_start(r: &RoadSpec) -> f64 {
    let stop_end = r.half_road() + r.crossing_offset + r.crossing_length + r.stop_line_gap + r.stop_line_width;
    stop_end + r.divider_gap
}

/// Oriented rectangle: centre, unit long axis, half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: [f64; 2],
    pub axis: [f64; 2],
    pub half_length: f64,
    pub half_width: f64,
}

impl Rect {
    /// Rectangle of `width` around the segment `a`–`b`, flush with its ends.
    pub fn around_segment(a: [f64; 2], b: [f64; 2], width: f64) -> Self {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        Self {
            center: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
            axis: [dx / len, dy / len],
            half_length: 0.5 * len,
            half_width: 0.5 * width,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let [ax, ay] = self.axis;
        let along = dx * ax + dy * ay;
        let across = dy * ax - dx * ay;
        along.abs() <= self.half_length && across.abs() <= self.half_width
    }

    /// Corners, counter-clockwise.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [cx, cy] = self.center;
        let [ax, ay] = self.axis;
        let (l, w) = (self.half_length, self.half_width);
        let at = |s: f64, t: f64| [cx + s * l * ax - t * w * ay, cy + s * l * ay + t * w * ax];
        [at(-1.0, -1.0), at(1.0, -1.0), at(1.0, 1.0), at(-1.0, 1.0)]
    }

    fn bbox(&self) -> [f64; 4] {
        let c = self.corners();
        let xs = c.map(|p| p[0]);
        let ys = c.map(|p| p[1]);
        let min = |v: [f64; 4]| v.into_iter().fold(f64::INFINITY, f64::min);
        let max = |v: [f64; 4]| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
        [min(xs), min(ys), max(xs), max(ys)]
    }
}

/// One ground-truth marking: its map geometry, the area a perfect camera
/// segmentation assigns to it, and the painted rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutElement {
    pub class: ElementClass,
    pub geometry: Geometry,
    pub region: Rect,
    pub paint: Vec<Rect>,
}

/// Uniform bucket grid over rectangles for point lookups.
#[derive(Debug, Clone)]
struct RectIndex {
    origin: f64,
    cell: f64,
    n: usize,
    buckets: Vec<Vec<(usize, Rect)>>,
}

impl RectIndex {
    fn new(extent: f64, rects: impl IntoIterator<Item = (usize, Rect)>) -> Self {
        let cell = 1.0;
        let n = ((2.0 * extent) / cell).ceil() as usize + 1;
        let mut idx = Self {
            origin: -extent,
            cell,
            n,
            buckets: vec![Vec::new(); n * n],
        };
        for (owner, r) in rects {
            let [x0, y0, x1, y1] = r.bbox();
            let (c0, r0) = (idx.clamp(x0), idx.clamp(y0));
            let (c1, r1) = (idx.clamp(x1), idx.clamp(y1));
            for row in r0..=r1 {
                for col in c0..=c1 {
                    idx.buckets[row * n + col].push((owner, r));
                }
            }
        }
        idx
    }

    fn clamp(&self, v: f64) -> usize {
        (((v - self.origin) / self.cell).floor().max(0.0) as usize).min(self.n - 1)
    }

    fn find(&self, x: f64, y: f64) -> Option<usize> {
        let (col, row) = (self.clamp(x), self.clamp(y));
        self.buckets[row * self.n + col]
            .iter()
            .find(|(_, r)| r.contains(x, y))
            .map(|&(owner, _)| owner)
    }
}

/// Marking geometry of a scene.
#[derive(Debug, Clone)]
pub struct Layout {
    pub elements: Vec<LayoutElement>,
    /// Ground covers `[-extent, extent]²`.
    pub extent: f64,
    paint_index: RectIndex,
    region_index: RectIndex,
}

const ARM_DIRECTIONS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];

impl Layout {
    pub fn build(road: &RoadSpec) -> Self {
        let half = road.half_road();
        let mut elements = Vec::new();
        for dir in ARM_DIRECTIONS.into_iter().take(road.arms) {
            let left = [-dir[1], dir[0]];
            let at = |u: f64, v: f64| [u * dir[0] + v * left[0], u * dir[1] + v * left[1]];

            let (c0, c1) = (
                half + road.crossing_offset,
                half + road.crossing_offset + road.crossing_length,
            );
            let pitch = road.stripe_width + road.stripe_gap;
            let stripes = ((2.0 * half + road.stripe_gap) / pitch).floor().max(1.0) as usize;
            let span = stripes as f64 * road.stripe_width + (stripes - 1) as f64 * road.stripe_gap;
            let paint = (0..stripes)
                .map(|i| {
                    let v = -0.5 * span + 0.5 * road.stripe_width + i as f64 * pitch;
                    Rect::around_segment(at(c0, v), at(c1, v), road.stripe_width)
                })
                .collect();
            let region = Rect::around_segment(at(c0, 0.0), at(c1, 0.0), span);
            elements.push(LayoutElement {
                class: ElementClass::PedestrianCrossing,
                geometry: Geometry::Polygon(region.corners().to_vec()),
                region,
                paint,
            });

            let s0 = c1 + road.stop_line_gap;
            let su = s0 + 0.5 * road.stop_line_width;
            let (a, b) = (at(su, road.stop_line_inset), at(su, half - road.stop_line_inset));
            let rect = Rect::around_segment(a, b, road.stop_line_width);
            elements.push(LayoutElement {
                class: ElementClass::StopLine,
                geometry: Geometry::Polyline(vec![a, b]),
                region: rect,
                paint: vec![rect],
            });

            let lanes = road.lanes_per_direction as i64;
            let first = first_dash_start(road);
            for j in -(lanes - 1)..=(lanes - 1) {
                let v = j as f64 * road.lane_width;
                let mut start = first;
                while start + road.dash_length <= road.arm_length {
                    let (a, b) = (at(start, v), at(start + road.dash_length, v));
                    let rect = Rect::around_segment(a, b, road.divider_width);
                    elements.push(LayoutElement {
                        class: ElementClass::LaneDivider,
                        geometry: Geometry::Polyline(vec![a, b]),
                        region: rect,
                        paint: vec![rect],
                    });
                    start += road.dash_length + road.dash_gap;
                }
            }
        }
        let extent = road.arm_length;
        let paint_index = RectIndex::new(
            extent,
            elements
                .iter()
                .enumerate()
                .flat_map(|(i, e)| e.paint.iter().map(move |r| (i, *r))),
        );
        let region_index = RectIndex::new(extent, elements.iter().enumerate().map(|(i, e)| (i, e.region)));
        Self {
            elements,
            extent,
            paint_index,
            region_index,
        }
    }

    /// Element whose paint covers `(x, y)`.
    pub fn painted_element(&self, x: f64, y: f64) -> Option<usize> {
        self.paint_index.find(x, y)
    }

    /// Class a perfect camera segmentation gives the ground at `(x, y)`.
    pub fn region_class(&self, x: f64, y: f64) -> Option<ElementClass> {
        self.region_index.find(x, y).map(|i| self.elements[i].class)
    }

    pub fn ground_truth(&self) -> VectorMap {
        let mut map = VectorMap::new(DEFAULT_CRS_NOTE);
        map.elements = self
            .elements
            .iter()
            .map(|e| MapElement {
                class: e.class,
                geometry: e.geometry.clone(),
                support_count: 0,
                confidence: 1.0,
            })
            .collect();
        map
    }
}

/// Everything [`generate_scene`] produces.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub layout: Layout,
    pub gt: VectorMap,
    pub calib: CameraCalibration,
    pub frames: Vec<PointCloud>,
    /// Per frame and point, the layout element whose paint the point lies on.
    pub hidden: Vec<Vec<Option<usize>>>,
    pub masks: Vec<LabelMask>,
    /// Camera capture time of each mask (s).
    pub mask_times: Vec<f64>,
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn round_micros(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

/// Expected ground returns per frame, from the density model summed over
/// 0.25 m cells.
pub fn expected_ground_points(spec: &SceneSpec) -> usize {
    let cell = 0.25;
    let e = spec.road.arm_length;
    let n = (2.0 * e / cell).ceil() as usize;
    let [sx, sy] = spec.sensor.position;
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|row| {
            let y = -e + (row as f64 + 0.5) * cell;
            (0..n)
                .map(|col| {
                    let x = -e + (col as f64 + 0.5) * cell;
                    let r = (x - sx).hypot(y - sy);
                    if r > spec.density.max_range {
                        0.0
                    } else {
                        spec.density.at(r) * cell * cell
                    }
                })
                .sum::<f64>()
        })
        .sum();
    total.round() as usize
}

#[derive(Debug, Clone, Copy)]
struct Vehicle {
    footprint: Rect,
}

fn place_vehicles(spec: &SceneSpec) -> Vec<Vehicle> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let road = &spec.road;
    let (u_lo, u_hi) = (first_dash_start(road), road.arm_length - 3.0);
    if u_hi <= u_lo {
        return Vec::new();
    }
    (0..spec.clutter.vehicles)
        .map(|_| {
            let dir = ARM_DIRECTIONS[rng.random_range(0..road.arms)];
            let lane = rng.random_range(0..2 * road.lanes_per_direction) as f64 - road.lanes_per_direction as f64;
            let v = (lane + 0.5) * road.lane_width;
            let u = rng.random_range(u_lo..u_hi);
            let left = [-dir[1], dir[0]];
            let at = |u: f64| [u * dir[0] + v * left[0], u * dir[1] + v * left[1]];
            Vehicle {
                footprint: Rect::around_segment(at(u - 2.25), at(u + 2.25), 1.8),
            }
        })
        .collect()
}

fn generate_frame(
    spec: &SceneSpec,
    layout: &Layout,
    vehicles: &[Vehicle],
    n_ground: usize,
    frame: usize,
) -> (PointCloud, Vec<Option<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(frame as u64 + 1);
    let e = layout.extent;
    let [sx, sy] = spec.sensor.position;
    let d_max = spec.density.points_per_m2;
    let intensity_noise = Normal::new(0.0, spec.intensity.noise_sigma).expect("sigma validated");
    let height_noise = Normal::new(0.0, spec.intensity.height_noise).expect("sigma validated");

    let mut points = Vec::with_capacity(n_ground + vehicles.len() * spec.clutter.points_per_vehicle);
    let mut hidden = Vec::with_capacity(points.capacity());
    while points.len() < n_ground {
        let x: f64 = rng.random_range(-e..e);
        let y: f64 = rng.random_range(-e..e);
        let r = (x - sx).hypot(y - sy);
        let keep: f64 = rng.random();
        if r > spec.density.max_range || keep >= spec.density.at(r) / d_max {
            continue;
        }
        let (x, y) = (quantize(x), quantize(y));
        let z = quantize(height_noise.sample(&mut rng));
        let label = layout.painted_element(x, y);
        let base = if label.is_some() {
            spec.intensity.paint
        } else {
            spec.intensity.asphalt
        };
        let intensity = quantize((base + intensity_noise.sample(&mut rng)).clamp(0.0, 255.0));
        points.push(Point3::new(x, y, z, intensity));
        hidden.push(label);
    }
    for v in vehicles {
        let f = v.footprint;
        for _ in 0..spec.clutter.points_per_vehicle {
            let s: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = rng.random_range(-1.0..1.0);
            let [ax, ay] = f.axis;
            let x = f.center[0] + s * f.half_length * ax - t * f.half_width * ay;
            let y = f.center[1] + s * f.half_length * ay + t * f.half_width * ax;
            let z: f64 = rng.random_range(0.3..1.5);
            let intensity: f64 = rng.random_range(20.0..120.0);
            points.push(Point3::new(quantize(x), quantize(y), quantize(z), quantize(intensity)));
            hidden.push(None);
        }
    }
    let t = round_micros(frame as f64 * spec.frame_interval);
    (PointCloud::new(points, format!("{frame:03}"), t), hidden)
}

/// Label mask of the ground truth seen through `calib`: each pixel centre is
/// cast onto `z = 0` and takes the class of the marking region it hits.
pub fn render_gt_mask(layout: &Layout, calib: &CameraCalibration, table: &ClassTable) -> LabelMask {
    let (w, h) = (calib.image_width as usize, calib.image_height as usize);
    let e = layout.extent;
    let labels: Vec<u8> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).map(move |col| {
                calib
                    .ground_hit(
                        PixelCoord {
                            u: col as f64,
                            v: row as f64,
                        },
                        0.0,
                    )
                    .filter(|p| p.x.abs() <= e && p.y.abs() <= e)
                    .and_then(|p| layout.region_class(p.x, p.y))
                    .and_then(|c| table.id_of(c))
                    .unwrap_or(BACKGROUND_ID)
            })
        })
        .collect();
    LabelMask {
        width: w,
        height: h,
        labels,
        class_table: table.clone(),
    }
}

/// Majority filter with a square window of half-size `radius(col, row)`.
/// A pixel takes the most frequent class in its window (clipped to the image)
/// when that class fills at least `keep_fraction` of it, else background.
/// Pixels with radius 0 keep their label.
pub fn blur_with_radius(
    mask: &LabelMask,
    radius: impl Fn(usize, usize) -> usize + Sync,
    keep_fraction: f64,
) -> LabelMask {
    let (w, h) = (mask.width, mask.height);
    let ids: Vec<u8> = mask.class_table.classes().map(|(id, _)| id).collect();
    // Summed-area table per class id.
    let stride = w + 1;
    let tables: Vec<Vec<u32>> = ids
        .par_iter()
        .map(|&id| {
            let mut t = vec![0u32; stride * (h + 1)];
            for row in 0..h {
                let mut run = 0u32;
                for col in 0..w {
                    run += (mask.get(col, row) == id) as u32;
                    t[(row + 1) * stride + col + 1] = t[row * stride + col + 1] + run;
                }
            }
            t
        })
        .collect();
    let labels = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            let tables = &tables;
            let ids = &ids;
            let radius = &radius;
            (0..w).map(move |col| {
                let r = radius(col, row);
                if r == 0 {
                    return mask.get(col, row);
                }
                let (c0, c1) = (col.saturating_sub(r), (col + r + 1).min(w));
                let (r0, r1) = (row.saturating_sub(r), (row + r + 1).min(h));
                let area = ((c1 - c0) * (r1 - r0)) as f64;
                let mut best = (0u32, BACKGROUND_ID);
                for (t, &id) in tables.iter().zip(ids) {
                    let n = t[r1 * stride + c1] + t[r0 * stride + c0] - t[r0 * stride + c1] - t[r1 * stride + c0];
                    if n > best.0 {
                        best = (n, id);
                    }
                }
                if best.0 > 0 && best.0 as f64 >= keep_fraction * area {
                    best.1
                } else {
                    BACKGROUND_ID
                }
            })
        })
        .collect();
    LabelMask {
        width: w,
        height: h,
        labels,
        class_table: mask.class_table.clone(),
    }
}

/// Distance-dependent blur: the window half-size is `px_per_m` pixels per
/// metre of ground distance from the mast beyond `start`. Thin distant
/// markings fade out while large areas keep their shape.
pub fn blur_by_distance(
    mask: &LabelMask,
    calib: &CameraCalibration,
    origin: [f64; 2],
    px_per_m: f64,
    start: f64,
    keep_fraction: f64,
) -> LabelMask {
    if px_per_m <= 0.0 {
        return mask.clone();
    }
    let radius = |col: usize, row: usize| {
        calib
            .ground_hit(
                PixelCoord {
                    u: col as f64,
                    v: row as f64,
                },
                0.0,
            )
            .map_or(0, |p| {
                (px_per_m * ((p.x - origin[0]).hypot(p.y - origin[1]) - start).max(0.0)).floor() as usize
            })
    };
    blur_with_radius(mask, radius, keep_fraction)
}

fn degrade_frame(spec: &SceneSpec, base: &LabelMask, frame: usize, lidar_time: f64) -> (LabelMask, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((1u64 << 32) + frame as u64);
    let d = &spec.degradation;
    let jitter = if d.sync_jitter > 0.0 {
        rng.random_range(-d.sync_jitter..=d.sync_jitter)
    } else {
        0.0
    };
    let mut mask = base.clone();
    let (w, h) = (mask.width, mask.height);
    for _ in 0..d.occlusions_per_frame {
        let (ow, oh) = (
            (d.occlusion_width as usize).min(w),
            (d.occlusion_height as usize).min(h),
        );
        let c0 = rng.random_range(0..=w - ow);
        let r0 = rng.random_range(0..=h - oh);
        for r in r0..r0 + oh {
            for c in c0..c0 + ow {
                mask.set(c, r, BACKGROUND_ID);
            }
        }
    }
    (mask, round_micros(lidar_time + jitter))
}

/// Build the scene described by `spec`. Identical specs give identical scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let layout = Layout::build(&spec.road);
    let calib = spec.sensor.calibration();
    calib.validate()?;
    let table = ClassTable::default();
    let n_ground = expected_ground_points(spec);
    let vehicles = place_vehicles(spec);

    let (frames, hidden): (Vec<_>, Vec<_>) = (0..spec.frames)
        .into_par_iter()
        .map(|f| generate_frame(spec, &layout, &vehicles, n_ground, f))
        .unzip();

    let exact = render_gt_mask(&layout, &calib, &table);
    let d = &spec.degradation;
    let blurred = blur_by_distance(
        &exact,
        &calib,
        spec.sensor.position,
        d.blur_px_per_m,
        d.blur_start,
        d.blur_keep_fraction,
    );
    let (masks, mask_times): (Vec<_>, Vec<_>) = frames
        .par_iter()
        .enumerate()
        .map(|(f, cloud)| degrade_frame(spec, &blurred, f, cloud.timestamp))
        .unzip();

    Ok(Scene {
        spec: *spec,
        gt: layout.ground_truth(),
        layout,
        calib,
        frames,
        hidden,
        masks,
        mask_times,
    })
}

pub const GT_FILE: &str = "gt.geojson";
pub const CALIB_FILE: &str = "calib.json";
pub const SPEC_FILE: &str = "spec.json";
pub const FRAMES_DIR: &str = "frames";
pub const MASKS_DIR: &str = "masks";

/// Write `scene` as a scene directory: ground truth, calibration, one RSPC
/// cloud and one PNG mask (with JSON sidecar) per frame, and the spec.
pub fn write_scene_dir(scene: &Scene, dir: &Path) -> Result<()> {
    io::write_map(&dir.join(GT_FILE), &scene.gt)?;
    io::write_calibration(&dir.join(CALIB_FILE), &scene.calib)?;
    io::write_json(&dir.join(SPEC_FILE), &scene.spec)?;
    scene
        .frames
        .par_iter()
        .zip(&scene.masks)
        .zip(&scene.mask_times)
        .try_for_each(|((cloud, mask), &t)| {
            io::write_cloud_binary(&dir.join(FRAMES_DIR).join(format!("{}.rspc", cloud.frame_id)), cloud)?;
            io::write_label_mask(
                &dir.join(MASKS_DIR).join(format!("{}.png", cloud.frame_id)),
                mask,
                None,
                Some(t),
            )
        })
}
