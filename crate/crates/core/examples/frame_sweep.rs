//! Fused-map quality and run time as more LiDAR frames are aggregated.

use rsmap::pipeline::{format_sweep, run_framecount_sweep, PipelineConfig, SceneInput};
use rsmap::synth::{generate_scene, SceneSpec};

fn main() -> rsmap::Result<()> {
    let ks = [1, 5, 10, 20];
    let scene = generate_scene(&SceneSpec {
        frames: 20,
        ..SceneSpec::default()
    })?;
    let cfg = PipelineConfig {
        grid_cell: 0.05,
        ..PipelineConfig::default()
    };
    let rows = run_framecount_sweep(&SceneInput::from(scene), &cfg, &ks)?;
    print!("{}", format_sweep(&rows));
    Ok(())
}
