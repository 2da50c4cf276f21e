//! Score a perturbed copy of the ground truth: shifted elements lose IoU,
//! dropped ones lower recall.

use rsmap::metrics::{evaluate, EvalConfig};
use rsmap::synth::{Layout, RoadSpec};
use rsmap::vectorize::Geometry;

fn main() -> rsmap::Result<()> {
    let gt = Layout::build(&RoadSpec::default()).ground_truth();
    let mut pred = gt.clone();
    for (i, e) in pred.elements.iter_mut().enumerate() {
        let shift = if i % 3 == 0 { 0.2 } else { 0.0 };
        let moved = |v: &[[f64; 2]]| v.iter().map(|&[x, y]| [x + shift, y]).collect::<Vec<_>>();
        e.geometry = match &e.geometry {
            Geometry::Polygon(v) => Geometry::Polygon(moved(v)),
            Geometry::Polyline(v) => Geometry::Polyline(moved(v)),
        };
    }
    let keep = pred.elements.len() * 9 / 10;
    pred.elements.truncate(keep);

    let report = evaluate(&pred, &gt, &EvalConfig::default())?;
    print!("{}", report.to_text());
    Ok(())
}
