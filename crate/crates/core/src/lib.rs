//! Monocular drone perception: camera pose from sparse direct alignment,
//! Bayesian depth filtering with multi-view densification, ground-plane
//! estimation, tracklet-graph multi-object tracking, 3D localization of
//! ground objects, evaluation metrics and a synthetic ground-truth harness.

pub mod alignment;
pub mod config;
pub mod depth;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ground;
pub mod image;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
