//! Write the default configuration as TOML and read back an edited copy.

use rsmap::pipeline::PipelineConfig;

fn main() -> rsmap::Result<()> {
    let defaults = PipelineConfig::default();
    println!("{}", defaults.to_toml());

    let edited = PipelineConfig::from_toml("grid_cell = 0.05\nframe_count = 20\n\n[ransac]\nseed = 11\n")?;
    println!(
        "grid_cell {} frames {:?} seed {}",
        edited.grid_cell, edited.frame_count, edited.ransac.seed
    );

    match PipelineConfig::from_toml("grid_size = 0.05\n") {
        Ok(_) => println!("unexpected: unknown key accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
