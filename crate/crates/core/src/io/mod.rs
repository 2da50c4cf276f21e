//! File formats: point clouds, labeled points, calibration, raster images
//! with JSON sidecars, GeoJSON and SVG maps, evaluation reports.
//!
//! Every writer goes through [`write_atomic`] so readers never observe a
//! partially written file.

mod cloud;
mod geojson;
mod png;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::CameraCalibration;

pub use cloud::{
    decode_binary_cloud, encode_binary_cloud, format_ascii_cloud, format_labeled, parse_ascii_cloud, parse_labeled,
    read_cloud, read_labeled, write_cloud_ascii, write_cloud_binary, write_labeled, BINARY_MAGIC,
};
pub use geojson::{map_from_geojson, map_to_geojson, read_map, write_map};
pub use png::{read_intensity_image, read_label_mask, sidecar_path, write_intensity_image, write_label_mask, Sidecar};
pub use svg::{render_svg, write_svg};

/// Write `bytes` to a temporary sibling of `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::format(path, "not a file path"))?
        .to_string_lossy();
    let tmp: PathBuf = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Load and validate a calibration file.
pub fn read_calibration(path: &Path) -> Result<CameraCalibration> {
    let calib: CameraCalibration = read_json(path)?;
    calib.validate()?;
    Ok(calib)
}

pub fn write_calibration(path: &Path, calib: &CameraCalibration) -> Result<()> {
    write_json(path, calib)
}
