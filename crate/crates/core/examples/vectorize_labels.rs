//! Vectorize labeled points into polygons and polylines.
//!
//! Uses the exact paint membership of a noise-free scene as labels, so the
//! output should reproduce the layout.
//!
//! cargo run --release --example vectorize_labels -- [out_dir]

use std::path::PathBuf;

use rsmap::io;
use rsmap::synth::{generate_scene, SceneSpec};
use rsmap::vectorize::{vectorize_map, VectorizeConfig};
use rsmap::{ClassTable, ElementClass, LabeledPoints, Provenance};

fn main() -> rsmap::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("rsmap-vectorize"), PathBuf::from);
    let scene = generate_scene(&SceneSpec {
        frames: 2,
        ..SceneSpec::clean()
    })?;

    let mut labeled = LabeledPoints::new(ClassTable::default());
    for (cloud, hidden) in scene.frames.iter().zip(&scene.hidden) {
        for (p, owner) in cloud.points.iter().zip(hidden) {
            if let Some(i) = owner {
                labeled.push(scene.layout.elements[*i].class, *p, Provenance::Merged, &cloud.frame_id);
            }
        }
    }

    let map = vectorize_map(&labeled, &VectorizeConfig::default())?;
    println!("{:<22}{:>8}{:>8}", "class", "truth", "found");
    for class in ElementClass::ALL {
        println!(
            "{:<22}{:>8}{:>8}",
            class.name(),
            scene.gt.count(class),
            map.count(class)
        );
    }
    io::write_map(&out.join("map.geojson"), &map)?;
    io::write_svg(&out.join("map.svg"), &map, 10.0)?;
    println!("wrote {}", out.display());
    Ok(())
}
