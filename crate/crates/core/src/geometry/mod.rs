//! Camera model, rigid poses, projection and two-view geometry.
//!
//! Camera frames are x right, y down, z forward. All types are plain values.

mod camera;
mod multiview;
mod pose;
mod pose_file;
mod robust;

pub use camera::{approximate_intrinsics, project, warp, CameraIntrinsics, FocalModel};
pub use multiview::{
    epipolar_line, triangulate, triangulate_point, triangulate_relative, EpipolarSegment,
    Triangulation, DEFAULT_MIN_RAY_ANGLE_DEG,
};
pub use pose::{relative_pose, Pose};
pub use pose_file::{read_poses, write_poses};
pub use robust::{huber_derivative, huber_norm, huber_weight};
