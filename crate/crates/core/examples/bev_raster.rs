//! Rasterize aggregated ground points into a bird's-eye intensity image and
//! segment painted markings from it.
//!
//! cargo run --release --example bev_raster -- [out_dir]

use std::path::PathBuf;

use rsmap::io;
use rsmap::pipeline::{bev_grid, concat_clouds, split_frames};
use rsmap::raster::{one_hot_masks, rasterize_intensity, IntensityScaling, PaintSegmenter};
use rsmap::synth::{generate_scene, SceneSpec};
use rsmap::{ClassTable, RansacConfig};

fn main() -> rsmap::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("rsmap-bev"), PathBuf::from);
    let scene = generate_scene(&SceneSpec {
        frames: 4,
        ..SceneSpec::default()
    })?;
    let grounds = split_frames(&scene.frames, &RansacConfig::default())?;
    let grid = bev_grid(&grounds, 0.05)?;
    let image = rasterize_intensity(&concat_clouds(&grounds), &grid, IntensityScaling::default());
    let seg = PaintSegmenter::default().segment(&image, &ClassTable::default());
    println!("grid {} x {} cells of {} m", grid.cols, grid.rows, grid.cell_size_x);
    for m in one_hot_masks(&seg)? {
        println!("{:<22}{:>9} cells", m.class.name(), m.count());
    }
    io::write_intensity_image(&out.join("intensity.png"), &image)?;
    io::write_label_mask(&out.join("segmentation.png"), &seg, Some(grid), None)?;
    println!("wrote {}", out.display());
    Ok(())
}
