//! Label ground points from camera masks and from the BEV segmentation, then
//! merge the two labeled sets.

use rsmap::fusion::{aggregate_frames, label_by_image, label_by_intensity, merge_labeled};
use rsmap::pipeline::{bev_grid, concat_clouds, split_frames};
use rsmap::raster::{rasterize_intensity, IntensityScaling, PaintSegmenter};
use rsmap::synth::{generate_scene, SceneSpec};
use rsmap::{ClassTable, ElementClass, RansacConfig};

fn main() -> rsmap::Result<()> {
    let scene = generate_scene(&SceneSpec {
        frames: 4,
        ..SceneSpec::default()
    })?;
    let grounds = split_frames(&scene.frames, &RansacConfig::default())?;

    let per_frame = grounds
        .iter()
        .zip(&scene.masks)
        .map(|(g, m)| label_by_image(g, m, &scene.calib))
        .collect::<rsmap::Result<Vec<_>>>()?;
    let image = aggregate_frames(&per_frame, grounds.len())?;

    let grid = bev_grid(&grounds, 0.05)?;
    let bev = rasterize_intensity(&concat_clouds(&grounds), &grid, IntensityScaling::default());
    let seg = PaintSegmenter::default().segment(&bev, &ClassTable::default());
    let per_frame = grounds
        .iter()
        .map(|g| label_by_intensity(g, &grid, &seg))
        .collect::<rsmap::Result<Vec<_>>>()?;
    let intensity = aggregate_frames(&per_frame, grounds.len())?;

    let fused = merge_labeled(&image, &intensity)?;
    println!("{:<22}{:>10}{:>10}{:>10}", "class", "camera", "intensity", "fused");
    for class in ElementClass::ALL {
        println!(
            "{:<22}{:>10}{:>10}{:>10}",
            class.name(),
            image.count(class),
            intensity.count(class),
            fused.count(class)
        );
    }
    Ok(())
}
