//! Ground-point density in rings around the sensor.

use rsmap::metrics::density_by_distance;
use rsmap::pipeline::{bev_grid, concat_clouds, split_frames};
use rsmap::synth::{generate_scene, SceneSpec};
use rsmap::RansacConfig;

fn main() -> rsmap::Result<()> {
    let spec = SceneSpec {
        frames: 3,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec)?;
    let grounds = split_frames(&scene.frames, &RansacConfig::default())?;
    let grid = bev_grid(&grounds, 0.05)?;
    let bins: Vec<(f64, f64)> = (0..7).map(|i| (10.0 * i as f64, 10.0 * (i + 1) as f64)).collect();
    let rows = density_by_distance(&concat_clouds(&grounds), &spec.sensor.origin(), &bins, &grid);
    println!(
        "{:<10}{:>10}{:>12}{:>10}{:>12}",
        "ring (m)", "points", "area (m2)", "pts/m2", "model x3"
    );
    for d in rows {
        let mid = 0.5 * (d.r_min + d.r_max);
        println!(
            "{:<10}{:>10}{:>12.1}{:>10.1}{:>12.1}",
            format!("{}-{}", d.r_min, d.r_max),
            d.points,
            d.area,
            d.density,
            3.0 * spec.density.at(mid)
        );
    }
    Ok(())
}
