//! Level-set extraction and reconstruction metrics.

pub mod bvh;
pub mod marching;
pub mod mesh;
pub mod metrics;

pub use bvh::TriangleBvh;
pub use marching::{extract_mesh, extract_mesh_banded, Grid};
pub use mesh::Mesh;
pub use metrics::{
    chamfer_l1, evaluate_frame, iou, mesh_occupancy, near_surface_miou, per_joint_miou, pose_bounds, uniform_miou,
    EvalConfig, FrameMetrics, MetricReport,
};
