//! Project road-surface points into the camera and cast pixels back onto the ground.

use rsmap::geometry::{grid_index, project_point, GridSpec};
use rsmap::synth::SensorSpec;
use rsmap::Point3;

fn main() -> rsmap::Result<()> {
    let calib = SensorSpec::default().calibration();
    let c = calib.camera_center();
    println!(
        "camera centre ({:.2}, {:.2}, {:.2}), fx = {:.1} px",
        c.x,
        c.y,
        c.z,
        calib.fx()
    );

    let grid = GridSpec::new(-20.0, -20.0, 0.5, 80, 80);
    println!(
        "{:>8}{:>8}{:>10}{:>10}{:>9}{:>12}{:>10}",
        "x", "y", "u", "v", "depth", "cell", "back err"
    );
    for (x, y) in [(0.0, 0.0), (6.0, 6.0), (10.0, -2.0), (-4.0, 12.0), (15.0, 15.0)] {
        let p = Point3::xyz(x, y, 0.0);
        let proj = project_point(&p, &calib)?;
        let back = calib.ground_hit(proj.pixel, 0.0).expect("pixel looks at the ground");
        let err = ((back.x - x).powi(2) + (back.y - y).powi(2)).sqrt();
        let (col, row) = grid_index(&p, &grid)?;
        println!(
            "{x:>8.1}{y:>8.1}{:>10.1}{:>10.1}{:>9.2}{:>12}{err:>10.1e}",
            proj.pixel.u,
            proj.pixel.v,
            proj.depth,
            format!("({col},{row})")
        );
    }

    match project_point(&Point3::xyz(-30.0, -30.0, 0.0), &calib) {
        Ok(p) => println!("behind point projected to {:?}", p.pixel),
        Err(e) => println!("point behind the camera: {e}"),
    }
    Ok(())
}
