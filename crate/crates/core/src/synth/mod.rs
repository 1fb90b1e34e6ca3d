//! Synthetic ground truth: a textured ground plane seen by a moving camera,
//! upright box objects, exact detections and their corruption.

mod corrupt;
mod features;
mod scene;
mod texture;

pub use corrupt::{corrupt_detections, CorruptionConfig, Occlusion};
pub use features::SyntheticFeatures;
pub use scene::{build_scene, ObjectTruth, Observation, ScenarioTruth, SceneSpec, TRUTH_VARIANCE};
pub use texture::Texture;
