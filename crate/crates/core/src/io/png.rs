//! 8-bit gray PNG rasters with a JSON sidecar (`<name>.json`) describing them.
//!
//! Label masks store each class's gray level from the class table; intensity
//! images store the rounded mean gray. Pixel row 0 is the first stored row:
//! the top of a camera image, or the minimum-y row of a BEV grid.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use ::image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::raster::{IntensityImage, LabelMask};

use super::{read_bytes, read_json, write_atomic, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_table: Option<ClassTable>,
    /// Ground grid for bird's-eye rasters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Capture time in seconds for camera masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

fn encode_png(width: usize, height: usize, pixels: Vec<u8>) -> Result<Vec<u8>> {
    let img = GrayImage::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| Error::Internal("pixel buffer does not match image size".into()))?;
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)?;
    Ok(buf)
}

fn decode_png(path: &Path) -> Result<GrayImage> {
    let bytes = read_bytes(path)?;
    let img = ::image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(img.to_luma8())
}

fn read_sidecar(png: &Path, image: &GrayImage) -> Result<Sidecar> {
    let side: Sidecar = read_json(&sidecar_path(png))?;
    if (side.width, side.height) != (image.width() as usize, image.height() as usize) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} (sidecar)", side.width, side.height),
            found: format!("{}x{} (image)", image.width(), image.height()),
        });
    }
    if let Some(g) = &side.grid {
        if (g.cols, g.rows) != (side.width, side.height) {
            return Err(Error::format(png, "sidecar grid does not match image size"));
        }
    }
    Ok(side)
}

pub fn write_label_mask(path: &Path, mask: &LabelMask, grid: Option<GridSpec>, timestamp: Option<f64>) -> Result<()> {
    mask.validate()?;
    let pixels = mask
        .labels
        .iter()
        .map(|&id| {
            mask.class_table
                .entry(id)
                .map(|e| e.gray)
                .ok_or(Error::UnknownLabel(id))
        })
        .collect::<Result<Vec<u8>>>()?;
    write_atomic(path, &encode_png(mask.width, mask.height, pixels)?)?;
    let side = Sidecar {
        width: mask.width,
        height: mask.height,
        class_table: Some(mask.class_table.clone()),
        grid,
        timestamp,
    };
    write_json(&sidecar_path(path), &side)
}

/// Read a label mask; the sidecar must carry the class table.
pub fn read_label_mask(path: &Path) -> Result<(LabelMask, Sidecar)> {
    let img = decode_png(path)?;
    let side = read_sidecar(path, &img)?;
    let table = side
        .class_table
        .clone()
        .ok_or_else(|| Error::format(sidecar_path(path), "label mask sidecar lacks class_table"))?;
    table.validate()?;
    let labels = img
        .as_raw()
        .iter()
        .map(|&g| {
            table
                .id_for_gray(g)
                .ok_or_else(|| Error::format(path, format!("gray level {g} is not in the class table")))
        })
        .collect::<Result<Vec<u8>>>()?;
    let mask = LabelMask {
        width: side.width,
        height: side.height,
        labels,
        class_table: table,
    };
    Ok((mask, side))
}

pub fn write_intensity_image(path: &Path, image: &IntensityImage) -> Result<()> {
    let spec = image.spec;
    write_atomic(path, &encode_png(spec.cols, spec.rows, image.to_gray8())?)?;
    let side = Sidecar {
        width: spec.cols,
        height: spec.rows,
        class_table: None,
        grid: Some(spec),
        timestamp: None,
    };
    write_json(&sidecar_path(path), &side)
}

/// Read an intensity image. Per-cell counts are not stored: non-zero cells
/// count as occupied by one point.
pub fn read_intensity_image(path: &Path) -> Result<IntensityImage> {
    let img = decode_png(path)?;
    let side = read_sidecar(path, &img)?;
    let spec = side
        .grid
        .ok_or_else(|| Error::format(sidecar_path(path), "intensity sidecar lacks grid"))?;
    let cells: Vec<f64> = img.as_raw().iter().map(|&g| g as f64).collect();
    let counts = img.as_raw().iter().map(|&g| (g > 0) as u32).collect();
    Ok(IntensityImage {
        spec,
        cells,
        counts,
        skipped: 0,
    })
}
