//! Tracking and localization metrics, and the localization ablation.

mod ablation;
mod hungarian;
mod localization;
mod mot;

pub use ablation::{ablation_run, noisy_depth, AblationConfig, AblationReport, LocalizationMode};
pub use hungarian::hungarian;
pub use localization::{
    localization_report, BucketStats, Localization, LocalizationReport, Welford, CSV_HEADER, DEFAULT_BUCKETS,
};
pub use mot::{
    frame_assignments, identity_overlaps, identity_true_positives, mot_metrics, FrameAssignment, MotMetrics,
    MATCH_IOU, MOSTLY_LOST, MOSTLY_TRACKED,
};
