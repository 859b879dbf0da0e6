//! Segmentation metrics: overlap, confusion rates and surface distances.

pub mod confusion;
pub mod report;
pub mod surface;

pub use confusion::{confusion, dice, iou, ConfusionCounts};
pub use report::{
    evaluate_case, evaluate_cases, evaluate_masks, CaseMetrics, MaskMetrics, MeanMetrics, MetricsReport, table_header, table_row, DEFAULT_TAU_MM,
};
pub use surface::{
    hd95, nsd, percentile, squared_distance_transform, surface_distances, surface_distances_with_path, surface_voxels,
    DistancePath, SurfaceDistanceStats, SurfaceDistances,
};
