//! Vectorized semantic intersection maps from roadside camera masks and LiDAR.
//!
//! The crate is organised by pipeline stage: [`geometry`] holds the camera and
//! grid models, [`ground`] splits ground from clutter, [`raster`] builds
//! bird's-eye intensity images and label masks, [`fusion`] labels ground
//! points from both sensors, [`vectorize`] turns labelled points into map
//! elements, [`metrics`] scores maps against ground truth, [`synth`] generates
//! test intersections and [`pipeline`] runs the whole flow.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classes;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod ground;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
mod spatial;
pub mod synth;
pub mod vectorize;

pub use classes::{ClassTable, ElementClass};
pub use error::{Error, Result};
pub use fusion::{LabeledPoints, Provenance};
pub use geometry::{CameraCalibration, GridSpec, Plane, Point3};
pub use ground::{PointCloud, RansacConfig};
pub use raster::{IntensityImage, LabelMask};
pub use vectorize::{Geometry, MapElement, VectorMap};
