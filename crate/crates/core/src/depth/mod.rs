//! Per-block depth from epipolar block matching, recursive Gaussian fusion
//! over a sliding window, and multi-view propagation into a dense raster.

mod densify;
mod filter;
mod ncc;
mod raster;
mod search;
mod window;

pub use densify::{densify, DensifyConfig};
pub use filter::{
    fuse, measurement_moments, DepthHypothesis, DepthObservation, MeasurementMoments,
    MomentGeometry,
};
pub use ncc::{ncc_score, ncc_score_with, NccMode};
pub use raster::DenseDepthMap;
pub use search::{epipolar_search, SearchConfig};
pub use window::{
    run_depth_window, DepthFilterConfig, DepthWindowOutput, ObservationMean, SeedState, WindowFrame,
};
