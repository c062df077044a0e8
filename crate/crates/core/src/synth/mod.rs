//! Deterministic synthetic data: voxel objects and orbit scans of them.

mod scan;
mod shapes;

pub(crate) use scan::trace;
pub use scan::{emit_pixel_events, render_view, simulate_scan, ScanConfig, ScanSettings};
pub use shapes::{
    category_profile, generate_category_object, generate_object, sample_shape, sample_shape_with, Cuboid, Extents,
    Shape, ShapeFamily,
};
