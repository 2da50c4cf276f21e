//! Separate road surface from vehicles and noise with RANSAC.

use rsmap::ground::extract_ground;
use rsmap::synth::{generate_scene, SceneSpec};
use rsmap::RansacConfig;

fn main() -> rsmap::Result<()> {
    let scene = generate_scene(&SceneSpec {
        frames: 1,
        ..SceneSpec::default()
    })?;
    let cloud = &scene.frames[0];
    let split = extract_ground(cloud, &RansacConfig::default())?;
    let n = split.plane.normal_vector();
    println!("frame {}: {} points", cloud.frame_id, cloud.len());
    println!(
        "plane normal ({:.4}, {:.4}, {:.4}), offset {:.4}",
        n.x, n.y, n.z, split.plane.d
    );
    println!("ground {}, other {}", split.ground.len(), split.non_ground.len());
    let tallest = split
        .non_ground
        .points
        .iter()
        .map(|p| p.z)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("highest non-ground point {tallest:.2} m");
    Ok(())
}
