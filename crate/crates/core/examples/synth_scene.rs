//! Generate a synthetic intersection and write it as a scene directory.
//!
//! cargo run --release --example synth_scene -- [out_dir] [frames]

use std::path::PathBuf;

use rsmap::synth::{generate_scene, write_scene_dir, SceneSpec};
use rsmap::ElementClass;

fn main() -> rsmap::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map_or_else(|| std::env::temp_dir().join("rsmap-scene"), PathBuf::from);
    let spec = SceneSpec {
        frames: args.next().and_then(|s| s.parse().ok()).unwrap_or(5),
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec)?;
    for class in ElementClass::ALL {
        println!("{:<22}{:>4} ground-truth elements", class.name(), scene.gt.count(class));
    }
    let points: usize = scene.frames.iter().map(|f| f.len()).sum();
    println!("{} frames, {} points in total", scene.frames.len(), points);
    write_scene_dir(&scene, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
