//! Whole-scene processing: ground filtering, camera and intensity labelling,
//! fusion, vectorization and (when ground truth exists) evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{aggregate_frames, check_sync, label_by_image, label_by_intensity, merge_labeled, LabeledPoints};
use crate::geometry::{CameraCalibration, GridSpec, Point3};
use crate::ground::{extract_ground, PointCloud, RansacConfig};
use crate::io;
use crate::metrics::{density_by_distance, evaluate, evaluate_rings, EvalConfig, EvalReport, DEFAULT_BINS};
use crate::raster::{rasterize_intensity, IntensityScaling, LabelMask, PaintSegmenter};
use crate::synth::{Scene, CALIB_FILE, FRAMES_DIR, GT_FILE, MASKS_DIR};
use crate::vectorize::{vectorize_map, VectorMap, VectorizeConfig};

/// Every tunable of the pipeline. Loaded from TOML; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Frames to aggregate, counted from the first; all frames when absent.
    pub frame_count: Option<usize>,
    /// BEV intensity grid edge (m).
    pub grid_cell: f64,
    /// Largest accepted camera/LiDAR time offset (s).
    pub sync_tolerance: f64,
    pub intensity_scaling: IntensityScaling,
    pub ransac: RansacConfig,
    pub segmenter: PaintSegmenter,
    pub vectorize: VectorizeConfig,
    pub eval: EvalConfig,
    /// Distance rings for the density and per-ring mIoU tables.
    pub distance_bins: Vec<[f64; 2]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_count: None,
            grid_cell: 0.01,
            sync_tolerance: crate::fusion::SYNC_TOLERANCE,
            intensity_scaling: IntensityScaling::default(),
            ransac: RansacConfig::default(),
            segmenter: PaintSegmenter::default(),
            vectorize: VectorizeConfig::default(),
            eval: EvalConfig::default(),
            distance_bins: DEFAULT_BINS.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.frame_count == Some(0) {
            return bad("frame_count must be >= 1".into());
        }
        if !(self.grid_cell > 0.0 && self.grid_cell.is_finite()) {
            return bad(format!("grid_cell must be > 0, got {}", self.grid_cell));
        }
        if !(self.sync_tolerance >= 0.0) {
            return bad(format!("sync_tolerance must be >= 0, got {}", self.sync_tolerance));
        }
        let s = &self.segmenter;
        if !(0.0..=255.0).contains(&s.paint_threshold) || !(s.link_radius > 0.0) {
            return bad("segmenter.paint_threshold must be within 0..=255 and link_radius > 0".into());
        }
        for [lo, hi] in &self.distance_bins {
            if !(*lo >= 0.0 && hi > lo) {
                return bad(format!("distance bin [{lo}, {hi}] is not an increasing range"));
            }
        }
        self.ransac.validate()?;
        self.vectorize.validate()?;
        self.eval.validate()
    }

    fn bins(&self) -> Vec<(f64, f64)> {
        self.distance_bins.iter().map(|&[a, b]| (a, b)).collect()
    }
}

/// Sensor data of one scene.
#[derive(Debug, Clone)]
pub struct SceneInput {
    pub calib: CameraCalibration,
    pub frames: Vec<PointCloud>,
    /// One camera mask per frame, same order.
    pub masks: Vec<LabelMask>,
    /// Camera capture times when known.
    pub mask_times: Vec<Option<f64>>,
    pub gt: Option<VectorMap>,
}

impl From<Scene> for SceneInput {
    fn from(scene: Scene) -> Self {
        Self {
            calib: scene.calib,
            frames: scene.frames,
            masks: scene.masks,
            mask_times: scene.mask_times.into_iter().map(Some).collect(),
            gt: Some(scene.gt),
        }
    }
}

impl SceneInput {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            calib: scene.calib.clone(),
            frames: scene.frames.clone(),
            masks: scene.masks.clone(),
            mask_times: scene.mask_times.iter().map(|&t| Some(t)).collect(),
            gt: Some(scene.gt.clone()),
        }
    }

    /// Read a scene directory: `calib.json`, `frames/*` (RSPC or text), one
    /// `masks/<frame>.png` per frame, and optionally `gt.geojson`.
    pub fn load(dir: &Path) -> Result<Self> {
        let calib = io::read_calibration(&dir.join(CALIB_FILE))?;
        let frame_paths = list_frames(&dir.join(FRAMES_DIR))?;
        let frames: Vec<PointCloud> = frame_paths
            .par_iter()
            .map(|p| io::read_cloud(p))
            .collect::<Result<_>>()?;
        let (masks, mask_times): (Vec<_>, Vec<_>) = frames
            .par_iter()
            .map(|f| {
                let path = dir.join(MASKS_DIR).join(format!("{}.png", f.frame_id));
                io::read_label_mask(&path).map(|(m, side)| (m, side.timestamp))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let gt_path = dir.join(GT_FILE);
        let gt = if gt_path.exists() {
            Some(io::read_map(&gt_path)?)
        } else {
            None
        };
        Ok(Self {
            calib,
            frames,
            masks,
            mask_times,
            gt,
        })
    }
}

/// Cloud files in `dir`, sorted by name. Sidecars and hidden files are skipped.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default();
        if path.is_file() && !name.starts_with('.') && matches!(ext.as_str(), "rspc" | "txt" | "xyz") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingInput(dir.join("*.rspc")));
    }
    Ok(paths)
}

/// Image-only, point-cloud-only and fused maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSet {
    pub image_only: VectorMap,
    pub pointcloud_only: VectorMap,
    pub multimodal: VectorMap,
}

impl MapSet {
    pub const FILES: [&'static str; 3] = ["image_only.geojson", "pointcloud_only.geojson", "multimodal.geojson"];

    pub fn maps(&self) -> [&VectorMap; 3] {
        [&self.image_only, &self.pointcloud_only, &self.multimodal]
    }
}

/// Evaluation of the three maps against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub frames: usize,
    pub image_only: EvalReport,
    pub pointcloud_only: EvalReport,
    /// Also carries the density and per-ring tables.
    pub multimodal: EvalReport,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        let _ = writeln!(s, "frames {}", self.frames);
        let _ = writeln!(s, "{:<8}{:>8}{:>12}{:>12}", "IoU", "Image", "PointCloud", "Multimodal");
        let reports = [&self.image_only, &self.pointcloud_only, &self.multimodal];
        for class in crate::classes::ElementClass::ALL {
            let [a, b, c] = reports.map(|r| fmt(r.class(class).and_then(|c| c.iou)));
            let _ = writeln!(s, "{:<8}{a:>8}{b:>12}{c:>12}", class.short());
        }
        let [a, b, c] = reports.map(|r| fmt(r.miou));
        let _ = writeln!(s, "{:<8}{a:>8}{b:>12}{c:>12}", "mIoU");
        let _ = writeln!(s, "\nmultimodal detail");
        s.push_str(&self.multimodal.to_text());
        s
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub ground: f64,
    pub image_labels: f64,
    pub intensity_labels: f64,
    pub vectorize: f64,
    pub evaluate: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub maps: MapSet,
    pub report: Option<Comparison>,
    pub timing: StageTimes,
    /// Grid used for the intensity raster.
    pub grid: GridSpec,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

/// Per-frame ground split with a frame-specific RANSAC seed.
pub fn split_frames(frames: &[PointCloud], ransac: &RansacConfig) -> Result<Vec<PointCloud>> {
    frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let cfg = RansacConfig {
                seed: ransac.seed.wrapping_add(i as u64),
                ..*ransac
            };
            extract_ground(f, &cfg).map(|s| s.ground)
        })
        .collect()
}

/// Grid over all points with its origin on a multiple of `cell`.
pub fn bev_grid<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>, cell: f64) -> Result<GridSpec> {
    GridSpec::aligned_covering(clouds.into_iter().flat_map(|c| c.points.iter()), cell)
        .ok_or_else(|| Error::DegenerateInput("no ground points to rasterize".into()))
}

/// Concatenate clouds into one.
pub fn concat_clouds(clouds: &[PointCloud]) -> PointCloud {
    let points = clouds.iter().flat_map(|c| c.points.iter().copied()).collect();
    let t = clouds.first().map_or(0.0, |c| c.timestamp);
    PointCloud::new(points, "aggregate", t)
}

/// Run the full flow on the first `cfg.frame_count` frames of `input`.
pub fn run_pipeline(input: &SceneInput, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let total = Instant::now();
    cfg.validate()?;
    let available = input.frames.len();
    let k = cfg.frame_count.unwrap_or(available);
    if k == 0 || k > available {
        return Err(Error::NotEnoughFrames {
            requested: k,
            available,
        });
    }
    if input.masks.len() < k {
        return Err(Error::NotEnoughFrames {
            requested: k,
            available: input.masks.len(),
        });
    }
    for i in 0..k {
        if let Some(t) = input.mask_times.get(i).copied().flatten() {
            check_sync(
                &input.frames[i].frame_id,
                input.frames[i].timestamp,
                t,
                cfg.sync_tolerance,
            )?;
        }
    }
    let mut timing = StageTimes::default();
    let frames = &input.frames[..k];

    let grounds = timed(&mut timing.ground, || split_frames(frames, &cfg.ransac))?;
    log::info!(
        "ground: {} of {} points kept over {k} frames",
        grounds.iter().map(PointCloud::len).sum::<usize>(),
        frames.iter().map(PointCloud::len).sum::<usize>()
    );

    let image_labels = timed(&mut timing.image_labels, || -> Result<LabeledPoints> {
        let per_frame = grounds
            .par_iter()
            .zip(&input.masks[..k])
            .map(|(g, m)| label_by_image(g, m, &input.calib))
            .collect::<Result<Vec<_>>>()?;
        aggregate_frames(&per_frame, k)
    })?;

    let mut grid = GridSpec::new(0.0, 0.0, cfg.grid_cell, 1, 1);
    let table = input.masks[0].class_table.clone();
    let intensity_labels = timed(&mut timing.intensity_labels, || -> Result<LabeledPoints> {
        grid = bev_grid(&grounds, cfg.grid_cell)?;
        let image = rasterize_intensity(&concat_clouds(&grounds), &grid, cfg.intensity_scaling);
        let seg = cfg.segmenter.segment(&image, &table);
        let per_frame = grounds
            .par_iter()
            .map(|g| label_by_intensity(g, &grid, &seg))
            .collect::<Result<Vec<_>>>()?;
        aggregate_frames(&per_frame, k)
    })?;
    log::info!(
        "labels: {} from camera, {} from intensity",
        image_labels.total(),
        intensity_labels.total()
    );

    let maps = timed(&mut timing.vectorize, || -> Result<MapSet> {
        let fused = merge_labeled(&image_labels, &intensity_labels)?;
        Ok(MapSet {
            image_only: vectorize_map(&image_labels, &cfg.vectorize)?,
            pointcloud_only: vectorize_map(&intensity_labels, &cfg.vectorize)?,
            multimodal: vectorize_map(&fused, &cfg.vectorize)?,
        })
    })?;

    let report = match &input.gt {
        None => None,
        Some(gt) => Some(timed(&mut timing.evaluate, || -> Result<Comparison> {
            let c = input.calib.camera_center();
            let origin = Point3::xyz(c.x, c.y, c.z);
            let bins = cfg.bins();
            let mut multimodal = evaluate(&maps.multimodal, gt, &cfg.eval)?;
            multimodal.density = density_by_distance(&concat_clouds(&grounds), &origin, &bins, &grid);
            multimodal.rings = evaluate_rings(&maps.multimodal, gt, &cfg.eval, &origin, &bins)?;
            Ok(Comparison {
                frames: k,
                image_only: evaluate(&maps.image_only, gt, &cfg.eval)?,
                pointcloud_only: evaluate(&maps.pointcloud_only, gt, &cfg.eval)?,
                multimodal,
            })
        })?),
    };
    timing.total = total.elapsed().as_secs_f64();
    Ok(PipelineOutput {
        maps,
        report,
        timing,
        grid,
    })
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const TIMING_JSON: &str = "timing.json";

/// Write the three maps, the report (when present) and the stage timings.
/// Timings go to their own file so the other outputs stay reproducible.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    for (name, map) in MapSet::FILES.iter().zip(out.maps.maps()) {
        io::write_map(&dir.join(name), map)?;
    }
    if let Some(report) = &out.report {
        io::write_json(&dir.join(REPORT_JSON), report)?;
        io::write_atomic(&dir.join(REPORT_TEXT), report.to_text().as_bytes())?;
    }
    io::write_json(&dir.join(TIMING_JSON), &out.timing)
}

/// Load `scene_dir`, run the pipeline and write outputs to `out_dir`.
pub fn run_pipeline_dir(scene_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let input = SceneInput::load(scene_dir)?;
    let out = run_pipeline(&input, cfg)?;
    write_outputs(&out, out_dir)?;
    Ok(out)
}

/// One row of a frame-count sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub miou: Option<f64>,
    pub seconds: f64,
}

/// Run the pipeline once per frame count in `ks`, reporting multimodal mIoU
/// and total wall time.
pub fn run_framecount_sweep(input: &SceneInput, cfg: &PipelineConfig, ks: &[usize]) -> Result<Vec<SweepRow>> {
    if let Some(&max) = ks.iter().max() {
        if max > input.frames.len() {
            return Err(Error::NotEnoughFrames {
                requested: max,
                available: input.frames.len(),
            });
        }
    }
    ks.iter()
        .map(|&k| {
            let run = PipelineConfig {
                frame_count: Some(k),
                ..cfg.clone()
            };
            let out = run_pipeline(input, &run)?;
            Ok(SweepRow {
                k,
                miou: out.report.and_then(|r| r.multimodal.miou),
                seconds: out.timing.total,
            })
        })
        .collect()
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = format!("{:>6}{:>8}{:>12}\n", "frames", "mIoU", "seconds");
    for r in rows {
        let miou = r.miou.map_or_else(|| "-".to_string(), |m| format!("{m:.3}"));
        let _ = writeln!(s, "{:>6}{miou:>8}{:>12.3}", r.k, r.seconds);
    }
    s
}
