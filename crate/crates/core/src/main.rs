//! `rsmap` command-line tool: each pipeline stage as a subcommand, plus the
//! whole flow, a frame-count sweep and a density table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use rsmap::fusion::{check_sync, label_by_image, label_by_intensity, merge_many};
use rsmap::ground::extract_ground;
use rsmap::metrics::{density_by_distance, evaluate};
use rsmap::pipeline::{
    bev_grid, concat_clouds, format_sweep, run_framecount_sweep, run_pipeline, write_outputs, PipelineConfig,
    SceneInput,
};
use rsmap::raster::rasterize_intensity;
use rsmap::synth::{generate_scene, write_scene_dir, SceneSpec};
use rsmap::vectorize::vectorize_map;
use rsmap::{io, ClassTable, Error, LabeledPoints, Point3, PointCloud, Provenance, RansacConfig, Result};

#[derive(Parser)]
#[command(
    name = "rsmap",
    version,
    about = "Vector intersection maps from roadside camera masks and LiDAR"
)]
struct Cli {
    /// Pipeline configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw (scene generation, RANSAC).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Scene spec as JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Split clouds into ground and non-ground points.
    Ground {
        /// Frames in order; frame i uses seed + i.
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write `<frame>.nonground.txt`.
        #[arg(long)]
        non_ground: bool,
    },
    /// Rasterize ground clouds to a BEV intensity image and segment paint.
    Raster {
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Segmentation mask (PNG plus JSON sidecar holding the grid).
        #[arg(long)]
        out: PathBuf,
        /// Also write the intensity image.
        #[arg(long)]
        intensity: Option<PathBuf>,
        /// BEV grid edge (m).
        #[arg(long = "grid-cell")]
        cell: Option<f64>,
    },
    /// Label ground points from camera masks or a BEV segmentation, or merge labeled sets.
    Fuse {
        #[arg(long, value_enum)]
        mode: FuseMode,
        /// Ground clouds (image and intensity modes).
        #[arg(long, num_args = 1..)]
        ground: Vec<PathBuf>,
        /// Camera masks paired with `--ground` (image mode) or one BEV mask (intensity mode).
        #[arg(long, num_args = 1..)]
        mask: Vec<PathBuf>,
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Labeled point files (merge mode).
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn labeled points into a vector map.
    Vectorize {
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also render an SVG preview.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score a predicted map against ground truth; the last line is the mIoU.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole flow on a scene directory.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of frames to aggregate.
        #[arg(long)]
        frames: Option<usize>,
        /// BEV grid edge (m).
        #[arg(long = "grid-cell")]
        cell: Option<f64>,
    },
    /// Run the pipeline at several frame counts.
    SweepFrames {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 10, 20, 50])]
        ks: Vec<usize>,
        /// Write the rows as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// BEV grid edge (m).
        #[arg(long = "grid-cell")]
        cell: Option<f64>,
    },
    /// Ground-point density per distance ring.
    Density {
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Ring centre `x,y`; defaults to the camera centre from `--calib`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        origin: Option<Vec<f64>>,
        #[arg(long)]
        calib: Option<PathBuf>,
        /// BEV grid edge (m).
        #[arg(long = "grid-cell")]
        cell: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FuseMode {
    Image,
    Intensity,
    Merge,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.ransac.seed = seed;
    }
    Ok(cfg)
}

fn with_cell(mut cfg: PipelineConfig, cell: Option<f64>) -> Result<PipelineConfig> {
    if let Some(c) = cell {
        cfg.grid_cell = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_clouds(paths: &[PathBuf]) -> Result<Vec<PointCloud>> {
    paths.iter().map(|p| io::read_cloud(p)).collect()
}

fn read_labeled_many(paths: &[PathBuf]) -> Result<LabeledPoints> {
    let table = ClassTable::default();
    let sets = paths
        .iter()
        .map(|p| io::read_labeled(p, &table, Provenance::Merged))
        .collect::<Result<Vec<_>>>()?;
    merge_many(&sets.iter().collect::<Vec<_>>())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth { out, spec, frames } => {
            let mut spec: SceneSpec = match spec {
                Some(p) => io::read_json(&p)?,
                None => SceneSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            if let Some(f) = frames {
                spec.frames = f;
            }
            let scene = generate_scene(&spec)?;
            write_scene_dir(&scene, &out)?;
            info!("wrote {} frames to {}", scene.frames.len(), out.display());
        }
        Command::Ground {
            input,
            out_dir,
            non_ground,
        } => {
            for (i, cloud) in read_clouds(&input)?.into_iter().enumerate() {
                let ransac = RansacConfig {
                    seed: cfg.ransac.seed.wrapping_add(i as u64),
                    ..cfg.ransac
                };
                let split = extract_ground(&cloud, &ransac)?;
                info!(
                    "{}: {} ground, {} other",
                    cloud.frame_id,
                    split.ground.len(),
                    split.non_ground.len()
                );
                io::write_cloud_ascii(&out_dir.join(format!("{}.txt", cloud.frame_id)), &split.ground)?;
                if non_ground {
                    io::write_cloud_ascii(
                        &out_dir.join(format!("{}.nonground.txt", cloud.frame_id)),
                        &split.non_ground,
                    )?;
                }
            }
        }
        Command::Raster {
            input,
            out,
            intensity,
            cell,
        } => {
            let cfg = with_cell(cfg, cell)?;
            let grounds = read_clouds(&input)?;
            let grid = bev_grid(&grounds, cfg.grid_cell)?;
            let image = rasterize_intensity(&concat_clouds(&grounds), &grid, cfg.intensity_scaling);
            let seg = cfg.segmenter.segment(&image, &ClassTable::default());
            io::write_label_mask(&out, &seg, Some(grid), None)?;
            if let Some(p) = intensity {
                io::write_intensity_image(&p, &image)?;
            }
        }
        Command::Fuse {
            mode,
            ground,
            mask,
            calib,
            input,
            out,
        } => {
            let labeled = match mode {
                FuseMode::Image => {
                    let calib = io::read_calibration(&calib.ok_or_else(|| Error::MissingInput("--calib".into()))?)?;
                    if mask.len() != ground.len() {
                        return Err(Error::DimensionMismatch {
                            expected: format!("{} masks", ground.len()),
                            found: mask.len().to_string(),
                        });
                    }
                    let mut sets = Vec::new();
                    for (g, m) in read_clouds(&ground)?.iter().zip(&mask) {
                        let (mask, side) = io::read_label_mask(m)?;
                        if let Some(t) = side.timestamp {
                            check_sync(&g.frame_id, g.timestamp, t, cfg.sync_tolerance)?;
                        }
                        sets.push(label_by_image(g, &mask, &calib)?);
                    }
                    merge_many(&sets.iter().collect::<Vec<_>>())?
                }
                FuseMode::Intensity => {
                    let [m] = mask.as_slice() else {
                        return Err(Error::InvalidConfig("intensity mode takes exactly one --mask".into()));
                    };
                    let (seg, side) = io::read_label_mask(m)?;
                    let grid = side
                        .grid
                        .ok_or_else(|| Error::format(m.clone(), "BEV mask sidecar has no grid"))?;
                    let sets = read_clouds(&ground)?
                        .iter()
                        .map(|g| label_by_intensity(g, &grid, &seg))
                        .collect::<Result<Vec<_>>>()?;
                    merge_many(&sets.iter().collect::<Vec<_>>())?
                }
                FuseMode::Merge => read_labeled_many(&input)?,
            };
            io::write_labeled(&out, &labeled)?;
        }
        Command::Vectorize { input, out, svg } => {
            let map = vectorize_map(&read_labeled_many(&input)?, &cfg.vectorize)?;
            io::write_map(&out, &map)?;
            if let Some(p) = svg {
                io::write_svg(&p, &map, 10.0)?;
            }
            println!("{} elements", map.len());
        }
        Command::Eval { pred, gt, out } => {
            let report = evaluate(&io::read_map(&pred)?, &io::read_map(&gt)?, &cfg.eval)?;
            if let Some(p) = out {
                io::write_json(&p, &report)?;
            }
            print!("{}", report.to_text());
        }
        Command::Pipeline {
            scene,
            out,
            frames,
            cell,
        } => {
            let mut cfg = with_cell(cfg, cell)?;
            if frames.is_some() {
                cfg.frame_count = frames;
            }
            let input = SceneInput::load(&scene)?;
            let result = run_pipeline(&input, &cfg)?;
            write_outputs(&result, &out)?;
            match &result.report {
                Some(r) => print!("{}", r.to_text()),
                None => println!("no ground truth; wrote maps to {}", out.display()),
            }
        }
        Command::SweepFrames { scene, ks, out, cell } => {
            let cfg = with_cell(cfg, cell)?;
            let rows = run_framecount_sweep(&SceneInput::load(&scene)?, &cfg, &ks)?;
            if let Some(p) = out {
                io::write_json(&p, &rows)?;
            }
            print!("{}", format_sweep(&rows));
        }
        Command::Density {
            input,
            origin,
            calib,
            cell,
        } => {
            let cfg = with_cell(cfg, cell)?;
            let origin = match (origin, calib) {
                (Some(o), _) => Point3::xyz(o[0], o[1], 0.0),
                (None, Some(c)) => {
                    let c = io::read_calibration(&c)?.camera_center();
                    Point3::xyz(c.x, c.y, c.z)
                }
                (None, None) => return Err(Error::MissingInput(PathBuf::from("--origin or --calib"))),
            };
            let clouds = read_clouds(&input)?;
            let grid = bev_grid(&clouds, cfg.grid_cell)?;
            let bins: Vec<(f64, f64)> = cfg.distance_bins.iter().map(|&[a, b]| (a, b)).collect();
            let rows = density_by_distance(&concat_clouds(&clouds), &origin, &bins, &grid);
            println!("{:<12}{:>10}{:>12}{:>12}", "range (m)", "points", "area (m2)", "pts/m2");
            for d in rows {
                println!(
                    "{:<12}{:>10}{:>12.1}{:>12.2}",
                    format!("{}-{}", d.r_min, d.r_max),
                    d.points,
                    d.area,
                    d.density
                );
            }
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
