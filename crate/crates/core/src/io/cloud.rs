//! Point clouds as text ("x y z intensity", `#` comments) or as RSPC binary:
//! magic `RSPC`, u32 point count, u64 timestamp in microseconds, then four
//! little-endian f32 per point. Labeled points add a class id column.

use std::fmt::Write as _;
use std::path::Path;

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::fusion::{LabeledPoints, Provenance};
use crate::geometry::Point3;
use crate::ground::PointCloud;

use super::{read_bytes, read_text, write_atomic};

pub const BINARY_MAGIC: &[u8; 4] = b"RSPC";
const HEADER_LEN: usize = 16;
const TIMESTAMP_KEY: &str = "timestamp";

fn frame_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn parse_fields<const N: usize>(line: &str, origin: &Path, lineno: usize) -> Result<[f64; N]> {
    let mut out = [0.0f64; N];
    let mut fields = line.split_whitespace();
    for slot in out.iter_mut() {
        let field = fields
            .next()
            .ok_or_else(|| Error::format(origin, format!("line {lineno}: expected {N} columns")))?;
        *slot = field
            .parse()
            .map_err(|_| Error::format(origin, format!("line {lineno}: bad number {field:?}")))?;
    }
    if fields.next().is_some() {
        return Err(Error::format(origin, format!("line {lineno}: expected {N} columns")));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(origin, format!("line {lineno}: non-finite value")));
    }
    Ok(out)
}

/// A `# timestamp <seconds>` comment, if the line is one.
fn timestamp_comment(line: &str) -> Option<f64> {
    let rest = line.strip_prefix('#')?.trim();
    rest.strip_prefix(TIMESTAMP_KEY)?.trim().parse().ok()
}

/// Parse the text format. `origin` only labels errors.
pub fn parse_ascii_cloud(text: &str, origin: &Path) -> Result<PointCloud> {
    let mut cloud = PointCloud::new(Vec::new(), frame_id_of(origin), 0.0);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') {
            if let Some(t) = timestamp_comment(line) {
                cloud.timestamp = t;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let [x, y, z, intensity] = parse_fields::<4>(line, origin, i + 1)?;
        cloud.points.push(Point3::new(x, y, z, intensity));
    }
    Ok(cloud)
}

pub fn format_ascii_cloud(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 40 + 64);
    let _ = writeln!(s, "# x y z intensity");
    let _ = writeln!(s, "# {TIMESTAMP_KEY} {}", cloud.timestamp);
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, p.intensity);
    }
    s
}

/// Encode as RSPC; coordinates are narrowed to f32.
pub fn encode_binary_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * cloud.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    let micros = (cloud.timestamp * 1e6).round().max(0.0) as u64;
    out.extend_from_slice(&micros.to_le_bytes());
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_binary_cloud(bytes: &[u8], origin: &Path) -> Result<PointCloud> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::format(origin, "missing RSPC header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let micros = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 16 {
        return Err(Error::format(
            origin,
            format!("header declares {count} points but body holds {} bytes", body.len()),
        ));
    }
    let points = body
        .chunks_exact(16)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().expect("4 bytes")) as f64;
            Point3::new(f(0), f(1), f(2), f(3))
        })
        .collect::<Vec<_>>();
    if points.iter().any(|p| !p.is_valid()) {
        return Err(Error::format(origin, "non-finite coordinate"));
    }
    Ok(PointCloud::new(points, frame_id_of(origin), micros as f64 / 1e6))
}

/// Read either format, chosen by the file's first bytes.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary_cloud(&bytes, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "neither RSPC nor UTF-8 text"))?;
        parse_ascii_cloud(&text, path)
    }
}

pub fn write_cloud_ascii(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_atomic(path, format_ascii_cloud(cloud).as_bytes())
}

pub fn write_cloud_binary(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_atomic(path, &encode_binary_cloud(cloud))
}

/// Text form of labeled points, grouped by class in class order.
pub fn format_labeled(points: &LabeledPoints) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# x y z intensity class_id");
    for (class, lp) in points.iter() {
        let id = points
            .class_table
            .id_of(class)
            .ok_or_else(|| Error::Internal(format!("class table lacks {class}")))?;
        let p = lp.point;
        let _ = writeln!(s, "{} {} {} {} {id}", p.x, p.y, p.z, p.intensity);
    }
    Ok(s)
}

/// Parse labeled points; every point gets `provenance` and the file's frame id.
pub fn parse_labeled(text: &str, origin: &Path, table: &ClassTable, provenance: Provenance) -> Result<LabeledPoints> {
    let frame = frame_id_of(origin);
    let mut out = LabeledPoints::new(table.clone());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let [x, y, z, intensity, id] = parse_fields::<5>(line, origin, i + 1)?;
        if id.fract() != 0.0 || !(0.0..=255.0).contains(&id) {
            return Err(Error::format(origin, format!("line {}: bad class id {id}", i + 1)));
        }
        let class = table
            .class_of(id as u8)?
            .ok_or_else(|| Error::format(origin, format!("line {}: background label", i + 1)))?;
        out.push(class, Point3::new(x, y, z, intensity), provenance, &frame);
    }
    Ok(out)
}

pub fn read_labeled(path: &Path, table: &ClassTable, provenance: Provenance) -> Result<LabeledPoints> {
    parse_labeled(&read_text(path)?, path, table, provenance)
}

pub fn write_labeled(path: &Path, points: &LabeledPoints) -> Result<()> {
    write_atomic(path, format_labeled(points)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ElementClass;

    fn sample() -> PointCloud {
        PointCloud::new(
            vec![Point3::new(1.5, -2.25, 0.125, 200.0), Point3::new(0.1, 0.2, 0.3, 60.0)],
            "007",
            1.25,
        )
    }

    #[test]
    fn ascii_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("007.txt");
        write_cloud_ascii(&p, &sample()).unwrap();
        assert_eq!(read_cloud(&p).unwrap(), sample());
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("007.rspc");
        write_cloud_binary(&p, &sample()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 16);
        assert_eq!(&bytes[..4], b"RSPC");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1_250_000);
        let back = read_cloud(&p).unwrap();
        assert_eq!(back.points[0], sample().points[0]);
        assert!((back.points[1].x - 0.1).abs() < 1e-7);
        assert_eq!(back.timestamp, 1.25);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let o = Path::new("bad.txt");
        assert!(matches!(parse_ascii_cloud("1 2 3\n", o), Err(Error::Format { .. })));
        assert!(matches!(parse_ascii_cloud("1 2 3 x\n", o), Err(Error::Format { .. })));
        assert!(matches!(parse_ascii_cloud("1 2 3 4 5\n", o), Err(Error::Format { .. })));
        assert!(parse_ascii_cloud("# only a comment\n\n", o).unwrap().is_empty());
        let mut bytes = encode_binary_cloud(&sample());
        bytes.pop();
        assert!(matches!(decode_binary_cloud(&bytes, o), Err(Error::Format { .. })));
    }

    #[test]
    fn labeled_round_trip() {
        let mut lp = LabeledPoints::new(ClassTable::default());
        lp.push(
            ElementClass::StopLine,
            Point3::new(1.0, 2.0, 0.0, 200.0),
            Provenance::FromImage,
            "x",
        );
        lp.push(
            ElementClass::PedestrianCrossing,
            Point3::new(3.0, 4.0, 0.0, 180.0),
            Provenance::FromImage,
            "x",
        );
        let text = format_labeled(&lp).unwrap();
        assert!(text.contains("1 2 0 200 2"));
        let back = parse_labeled(&text, Path::new("x.txt"), &ClassTable::default(), Provenance::FromImage).unwrap();
        assert_eq!(back, lp);
        assert!(matches!(
            parse_labeled(
                "0 0 0 0 9\n",
                Path::new("x"),
                &ClassTable::default(),
                Provenance::FromImage
            ),
            Err(Error::UnknownLabel(9))
        ));
    }
}
