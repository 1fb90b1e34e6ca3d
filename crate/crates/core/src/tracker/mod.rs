//! Tracklet-graph multi-object tracking: frame-to-frame association into
//! tracklets, pairwise connectivity, graph clustering into identities, and
//! smoothing of low-confidence boxes.

mod detection;
mod graph;
mod pipeline;
mod smooth;
mod tracklet;

pub use detection::{group_by_frame, read_detections, write_detections, BBox, Detection};
pub use graph::{
    cluster_graph, cluster_labels, clustering_cost, connectivity, ConnectivityConfig,
    ConnectivityScorer, SurrogateScorer, Track, TrackBox, TrackGraph,
};
pub use pipeline::{track_pipeline, tracks_to_detections, write_tracks, TrackerConfig};
pub use smooth::{smooth_box, Smoothed};
pub use tracklet::{cosine_similarity, generate_tracklets, FrameMotion, MotionModel, Tracklet};
