//! Map quality: rasterized IoU, one-way Chamfer distance, average precision
//! and point density by distance.

mod ap;
mod chamfer;
mod density;
mod raster;
mod report;

pub use ap::{average_precision, interpolated_ap, match_instances, precision_recall, MatchCriteria};
pub use chamfer::{chamfer_one_way, resample_curve};
pub use density::{density_by_distance, disk_rect_area, DensityRow, DEFAULT_BINS};
pub use raster::{element_cells, iou, iou_in_region, rasterize_map, sparse_iou, RasterMask};
pub use report::{
    evaluate, evaluate_rings, evaluation_grid, ClassScore, EvalConfig, EvalReport, InstanceScore, RingScore,
};
