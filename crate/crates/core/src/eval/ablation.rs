use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{hungarian, LocalizationReport, DEFAULT_BUCKETS};
use crate::depth::DenseDepthMap;
use crate::error::{Error, Result};
use crate::ground::{backproject_footpoint, estimate_ground, GroundPlane, DEFAULT_PATCH_FRACTION};
use crate::synth::{corrupt_detections, CorruptionConfig, Observation, ScenarioTruth};
use crate::tracker::{group_by_frame, track_pipeline, tracks_to_detections, Detection, MotionModel, TrackerConfig};

/// Localization stack variants compared by [`ablation_run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalizationMode {
    /// Image y axis taken as vertical, configured camera height.
    FlatGround,
    /// Plane fitted to depth beneath the raw detections.
    GroundEstimate,
    /// Plane fitted beneath tracked, smoothed boxes.
    TrackedGroundEstimate,
}

impl LocalizationMode {
    pub const ALL: [LocalizationMode; 3] = [Self::FlatGround, Self::GroundEstimate, Self::TrackedGroundEstimate];

    pub fn name(&self) -> &'static str {
        match self {
            Self::FlatGround => "Det+Flat_Ground",
            Self::GroundEstimate => "Det+Ground_Est",
            Self::TrackedGroundEstimate => "Det+Trk+Ground_Est",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub corruption: CorruptionConfig,
    /// Relative std of the multiplicative depth noise.
    pub depth_noise: f64,
    pub tracker: TrackerConfig,
    pub patch_fraction: f64,
    /// Minimum IOU between an estimate's box and the truth box.
    pub match_iou: f64,
    pub buckets: Vec<f64>,
    /// Height used by the flat-ground mode; `None` takes the true height.
    pub flat_height: Option<f64>,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            corruption: CorruptionConfig {
                center_noise: 1.0,
                size_noise: 0.02,
                score_range: (0.5, 1.0),
                low_score_prob: 0.25,
                low_score_range: (0.05, 0.19),
                low_score_noise_gain: 6.0,
                embedding_noise: 0.05,
                seed: 11,
                ..CorruptionConfig::none()
            },
            depth_noise: 0.01,
            tracker: TrackerConfig::default(),
            patch_fraction: DEFAULT_PATCH_FRACTION,
            match_iou: 0.2,
            buckets: DEFAULT_BUCKETS.to_vec(),
            flat_height: None,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    /// Reports in the order of [`LocalizationMode::ALL`].
    pub reports: Vec<(LocalizationMode, LocalizationReport)>,
    /// Boxes per mode whose footpoint could not be localized.
    pub failures: Vec<(LocalizationMode, usize)>,
}

impl AblationReport {
    pub fn report(&self, mode: LocalizationMode) -> &LocalizationReport {
        &self.reports.iter().find(|(m, _)| *m == mode).expect("every mode is reported").1
    }

    pub fn table(&self) -> String {
        let mut s = self.reports[0].1.table_header();
        for (m, r) in &self.reports {
            s.push('\n');
            s.push_str(&r.table_row(m.name()));
        }
        s.push('\n');
        s
    }

    pub fn csv(&self) -> String {
        let mut s = format!("{}\n", super::CSV_HEADER);
        for (m, r) in &self.reports {
            s.push_str(&r.csv_rows(m.name()));
        }
        s
    }
}

/// Truth depth with multiplicative Gaussian noise, seeded per frame.
pub fn noisy_depth(truth: &ScenarioTruth, frame: usize, rel_std: f64, seed: u64) -> Result<DenseDepthMap> {
    let exact = truth.depth_raster(frame)?;
    if rel_std == 0.0 {
        return Ok(exact);
    }
    let normal = Normal::new(0.0, rel_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let depth: Vec<f64> = exact
        .depths()
        .iter()
        .map(|d| if *d > 0.0 { d * (1.0 + normal.sample(&mut rng)).max(0.05) } else { 0.0 })
        .collect();
    let var: Vec<f64> = depth.iter().map(|d| if *d > 0.0 { (d * rel_std).powi(2) } else { 0.0 }).collect();
    DenseDepthMap::new(exact.width(), exact.height(), depth, var)
}

/// `(true distance, error)` for estimates matched to truth boxes by IOU.
fn match_errors(est: &[(Detection, Point3<f64>)], truth: &[Observation], min_iou: f64) -> Vec<(f64, f64)> {
    let cost: Vec<Vec<f64>> = est
        .iter()
        .map(|(d, _)| {
            truth
                .iter()
                .map(|o| {
                    let iou = d.bbox.iou(&o.bbox);
                    if iou >= min_iou {
                        1.0 - iou
                    } else {
                        1e6
                    }
                })
                .collect()
        })
        .collect();
    hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let j = j?;
            (cost[i][j] < 1e6).then(|| {
                let t = &truth[j].footpoint_camera;
                (t.coords.norm(), (est[i].1 - t).norm())
            })
        })
        .collect()
}

fn localize(dets: &[Detection], plane: &GroundPlane, truth: &ScenarioTruth) -> (Vec<(Detection, Point3<f64>)>, usize) {
    let mut out = Vec::new();
    let mut failed = 0;
    for d in dets {
        match backproject_footpoint(&d.bbox.footpoint(), plane, &truth.intrinsics) {
            Ok(p) => out.push((d.clone(), p)),
            Err(_) => failed += 1,
        }
    }
    (out, failed)
}

struct FrameResult {
    errors: [Vec<(f64, f64)>; 3],
    failures: [usize; 3],
}

/// Runs the three localization variants over a scene and reports the
/// distance-bucketed errors of each.
pub fn ablation_run(truth: &ScenarioTruth, cfg: &AblationConfig) -> Result<AblationReport> {
    if truth.observations.iter().all(Vec::is_empty) {
        return Err(Error::EmptyReport("scene has no truth objects".into()));
    }
    let n = truth.frame_count();
    let raw = corrupt_detections(truth, &cfg.corruption).map_err(|e| e.in_stage("detections"))?;
    let tracks = track_pipeline(&raw, &MotionModel::identity(), &cfg.tracker).map_err(|e| e.in_stage("tracking"))?;
    let raw_frames = group_by_frame(&raw, n);
    let trk_frames = group_by_frame(&tracks_to_detections(&tracks), n);
    let flat = GroundPlane::flat(cfg.flat_height.unwrap_or(truth.spec.camera_height))?;
    let k = &truth.intrinsics;

    let per_frame: Vec<FrameResult> = (0..n)
        .into_par_iter()
        .map(|f| -> Result<FrameResult> {
            let depth = noisy_depth(truth, f, cfg.depth_noise, cfg.seed)?;
            let obs = &truth.observations[f];
            let mut errors: [Vec<(f64, f64)>; 3] = Default::default();
            let mut failures = [0; 3];
            let (est, fail) = localize(&raw_frames[f], &flat, truth);
            errors[0] = match_errors(&est, obs, cfg.match_iou);
            failures[0] = fail;
            for (slot, dets) in [(1, &raw_frames[f]), (2, &trk_frames[f])] {
                if dets.is_empty() {
                    continue;
                }
                match estimate_ground(dets, &depth, k, None, cfg.patch_fraction) {
                    Ok(g) => {
                        let (est, fail) = localize(dets, &g.plane, truth);
                        errors[slot] = match_errors(&est, obs, cfg.match_iou);
                        failures[slot] = fail;
                    }
                    Err(e) => {
                        log::debug!("frame {f}: no ground estimate ({e})");
                        failures[slot] = dets.len();
                    }
                }
            }
            Ok(FrameResult { errors, failures })
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (i, mode) in LocalizationMode::ALL.into_iter().enumerate() {
        let pairs: Vec<(f64, f64)> = per_frame.iter().flat_map(|r| r.errors[i].iter().copied()).collect();
        reports.push((mode, LocalizationReport::from_errors(&pairs, &cfg.buckets).map_err(|e| e.in_stage(mode.name()))?));
        failures.push((mode, per_frame.iter().map(|r| r.failures[i]).sum()));
    }
    Ok(AblationReport { reports, failures })
}
