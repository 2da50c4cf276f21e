//! Run the whole flow on a generated scene and compare camera-only,
//! LiDAR-only and fused maps.
//!
//! cargo run --release --example full_pipeline -- [frames] [config.toml]

use rsmap::pipeline::{run_pipeline, PipelineConfig, SceneInput};
use rsmap::synth::{generate_scene, SceneSpec};

fn main() -> rsmap::Result<()> {
    let mut args = std::env::args().skip(1);
    let frames = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let cfg = match args.next() {
        Some(path) => PipelineConfig::load(path.as_ref())?,
        None => PipelineConfig {
            grid_cell: 0.05,
            ..PipelineConfig::default()
        },
    };
    let scene = generate_scene(&SceneSpec {
        frames,
        ..SceneSpec::default()
    })?;
    let out = run_pipeline(&SceneInput::from(scene), &cfg)?;
    if let Some(report) = &out.report {
        print!("{}", report.to_text());
    }
    let t = out.timing;
    println!(
        "\nseconds: ground {:.2}, camera {:.2}, intensity {:.2}, vectorize {:.2}, evaluate {:.2}, total {:.2}",
        t.ground, t.image_labels, t.intensity_labels, t.vectorize, t.evaluate, t.total
    );
    Ok(())
}
