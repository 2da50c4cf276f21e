use std::fmt::Write as _;
use std::path::Path;

use crate::classes::ElementClass;
use crate::error::Result;
use crate::vectorize::{Geometry, VectorMap};

use super::write_atomic;

fn color(class: ElementClass) -> &'static str {
    match class {
        ElementClass::StopLine => "#e6c200",
        ElementClass::LaneDivider => "#2e9e44",
        ElementClass::PedestrianCrossing => "#2f6fd6",
    }
}

/// Top-down drawing of the map, `px_per_m` pixels per metre, y up.
pub fn render_svg(map: &VectorMap, px_per_m: f64) -> String {
    let [x0, y0, x1, y1] = map.bbox().unwrap_or([0.0, 0.0, 1.0, 1.0]);
    let pad = 2.0;
    let (w, h) = ((x1 - x0 + 2.0 * pad) * px_per_m, (y1 - y0 + 2.0 * pad) * px_per_m);
    let px = |p: &[f64; 2]| ((p[0] - x0 + pad) * px_per_m, (y1 + pad - p[1]) * px_per_m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#3a3a3a"/>"##);
    for e in &map.elements {
        let pts: Vec<String> = e
            .geometry
            .vertices()
            .iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let c = color(e.class);
        let _ = match e.geometry {
            Geometry::Polygon(_) => writeln!(
                s,
                r#"<polygon class="{}" points="{}" fill="{c}" fill-opacity="0.45" stroke="{c}" stroke-width="2"/>"#,
                e.class,
                pts.join(" ")
            ),
            Geometry::Polyline(_) => writeln!(
                s,
                r#"<polyline class="{}" points="{}" fill="none" stroke="{c}" stroke-width="3"/>"#,
                e.class,
                pts.join(" ")
            ),
        };
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, map: &VectorMap, px_per_m: f64) -> Result<()> {
    write_atomic(path, render_svg(map, px_per_m).as_bytes())
}
