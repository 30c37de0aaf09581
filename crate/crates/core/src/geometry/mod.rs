//! Mesh extraction from scalar grids and the evaluation metrics read
//! off the result: Chamfer distance and topology success via the Euler
//! characteristic.

pub mod grid;
pub mod marching;
pub mod mesh;
pub mod metrics;
mod tables;

pub use grid::{ScalarGrid, GRID_HALF_EXTENT, GRID_RESOLUTION, ISO_LEVEL};
pub use marching::{marching_cubes, sign_changing_edges};
pub use mesh::{
    euler_characteristic, genus, manifold_check, obj_string, write_obj, ManifoldReport, Mesh,
};
pub use metrics::{
    chamfer, heatmap_colors, nearest_distances, tsr, FrameMetrics, MetricsReport,
    CHAMFER_VARIANT,
};
