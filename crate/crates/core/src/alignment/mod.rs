//! Sparse direct image alignment: a reference image with inverse depths at
//! feature locations, photometric pose estimation against it, and a
//! keyframe-based odometry loop.

mod features;
mod map;
mod odometry;
mod photometric;
mod two_view;

pub use features::{match_features, FeaturePoint, FeatureProvider, FeatureTable};
pub use map::{initialize_depth_map, MapEntry, MapInitConfig, SparseDepthMap};
pub use odometry::{track_sequence, OdometryConfig, ScaleReference};
pub use photometric::{estimate_relative_pose, AlignmentConfig, AlignmentResult, PhotometricProblem};
pub use two_view::{essential_matrix, homography, two_view_pose, TwoViewGeometry};
