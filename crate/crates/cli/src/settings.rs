//! Validated run settings built from the `key = value` config.

use std::path::{Path, PathBuf};

use skyloc_core::config::KeyValueConfig;
use skyloc_core::depth::{DepthFilterConfig, ObservationMean};
use skyloc_core::eval::{AblationConfig, DEFAULT_BUCKETS};
use skyloc_core::geometry::{approximate_intrinsics, CameraIntrinsics, FocalModel};
use skyloc_core::ground::DEFAULT_PATCH_FRACTION;
use skyloc_core::synth::{CorruptionConfig, Occlusion, SceneSpec};
use skyloc_core::tracker::TrackerConfig;

use crate::error::{CliError, CliResult};

/// Sections read by `SceneSpec::from_config`.
pub const SCENE_SECTIONS: [(&str, &[&str]); 5] = [
    ("scene", &["seed", "frames", "fps", "width", "height", "hfov", "focal_model"]),
    ("camera", &["height", "pitch", "yaw", "yaw_rate", "velocity", "pure_rotation"]),
    ("texture", &["base", "amplitude", "cell", "octaves", "seed"]),
    ("objects", &["count", "size", "distance", "lateral", "speed", "classes", "embedding_dim", "max_iou"]),
    ("features", &["spacing", "range", "descriptor_len"]),
];

const RUN_SECTIONS: [(&str, &[&str]); 10] = [
    ("run", &["seed", "plot"]),
    ("paths", &PATH_KEYS),
    ("simulate", &["write_depth", "write_images"]),
    (
        "corruption",
        &[
            "preset", "center_noise", "size_noise", "score_range", "low_score_prob", "low_score_range",
            "low_score_gain", "miss_prob", "embedding_noise", "occlusions", "seed",
        ],
    ),
    (
        "tracker",
        &[
            "iou_thresh", "time_window", "score_thresh", "smooth_k", "merge_threshold", "w_appearance",
            "w_motion", "w_gap", "motion_sigma", "velocity_frames",
        ],
    ),
    ("depth", &["noise", "seed", "window", "ncc_thresh", "observation_mean", "convergence_ratio"]),
    ("ground", &["patch_frac", "flat_ground", "height_ref"]),
    ("intrinsics", &["hfov", "literal"]),
    ("evaluate", &["buckets", "ablation", "match_iou"]),
    ("odometry", &["enabled", "scale_ref", "keyframe_interval"]),
];

pub const PATH_KEYS: [&str; 10] = [
    "scene", "detections", "tracks", "truth", "truth_positions", "localization", "poses", "depth_dir", "images",
    "features",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub scene: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub tracks: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub truth_positions: Option<PathBuf>,
    pub localization: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub depth_dir: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

impl Paths {
    pub fn get(&self, key: &str) -> Option<&PathBuf> {
        match key {
            "scene" => self.scene.as_ref(),
            "detections" => self.detections.as_ref(),
            "tracks" => self.tracks.as_ref(),
            "truth" => self.truth.as_ref(),
            "truth_positions" => self.truth_positions.as_ref(),
            "localization" => self.localization.as_ref(),
            "poses" => self.poses.as_ref(),
            "depth_dir" => self.depth_dir.as_ref(),
            "images" => self.images.as_ref(),
            "features" => self.features.as_ref(),
            _ => None,
        }
    }

    /// The path under `key`, or a config error naming the missing key.
    pub fn require(&self, key: &str) -> CliResult<&PathBuf> {
        self.get(key)
            .ok_or_else(|| CliError::config(format!("no {key} input: set [paths] {key} or pass the matching flag")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSettings {
    /// Relative std of the noise on synthetic depth rasters.
    pub noise: f64,
    pub seed: u64,
    /// Frames in the depth-filter window.
    pub window: usize,
    pub filter: DepthFilterConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundSettings {
    pub patch_fraction: f64,
    pub flat_ground: bool,
    pub height_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSettings {
    pub buckets: Vec<f64>,
    pub ablation: bool,
    pub match_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometrySettings {
    pub enabled: bool,
    pub scale_ref: Option<f64>,
    pub keyframe_interval: usize,
}

/// Every hyperparameter of a run, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Effective configuration; its canonical text is the manifest snapshot.
    pub raw: KeyValueConfig,
    /// Explicit run seed, overriding the scene seed.
    pub seed: Option<u64>,
    /// Emit SVG plots.
    pub plot: bool,
    pub paths: Paths,
    pub write_depth: bool,
    pub write_images: bool,
    pub corruption: CorruptionConfig,
    pub tracker: TrackerConfig,
    pub depth: DepthSettings,
    pub ground: GroundSettings,
    pub hfov: Option<f64>,
    pub literal_intrinsics: bool,
    pub evaluate: EvaluateSettings,
    pub odometry: OdometrySettings,
}

fn cfg_err(e: skyloc_core::Error) -> CliError {
    CliError::config(e.to_string())
}

fn pair(cfg: &KeyValueConfig, section: &str, key: &str, default: (f64, f64)) -> CliResult<(f64, f64)> {
    match cfg.get_list::<f64>(section, key).map_err(cfg_err)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(v) => Err(CliError::config(format!("[{section}] {key}: expected 2 values, got {}", v.len()))),
    }
}

/// `object:start-end` items, e.g. `3:12-39`.
fn occlusions(cfg: &KeyValueConfig) -> CliResult<Vec<Occlusion>> {
    let items = cfg.get_list::<String>("corruption", "occlusions").map_err(cfg_err)?.unwrap_or_default();
    items
        .iter()
        .map(|item| {
            let bad = || CliError::config(format!("[corruption] occlusions: expected 'object:start-end', got '{item}'"));
            let (object, range) = item.split_once(':').ok_or_else(bad)?;
            let (start, end) = range.split_once('-').ok_or_else(bad)?;
            Ok(Occlusion {
                object: object.trim().parse().map_err(|_| bad())?,
                start: start.trim().parse().map_err(|_| bad())?,
                end: end.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Default detector imperfections: the noisy detector of the ablation study.
pub fn default_corruption() -> CorruptionConfig {
    AblationConfig::default().corruption
}

fn check_known_keys(cfg: &KeyValueConfig) -> CliResult<()> {
    let known = SCENE_SECTIONS.iter().chain(RUN_SECTIONS.iter());
    let table: Vec<(&str, &[&str])> = known.copied().collect();
    for section in cfg.section_names() {
        let Some((_, keys)) = table.iter().find(|(s, _)| *s == section) else {
            return Err(CliError::config(format!("unknown section [{section}]")));
        };
        for (key, line) in cfg.keys(section) {
            if !keys.contains(&key) {
                let at = if line > 0 { format!(" (line {line})") } else { String::new() };
                return Err(CliError::config(format!("unknown key '{key}' in [{section}]{at}")));
            }
        }
    }
    Ok(())
}

impl Settings {
    pub fn from_config(cfg: &KeyValueConfig) -> CliResult<Self> {
        check_known_keys(cfg)?;
        let get_bool = |s: &str, k: &str| cfg.get_or(s, k, false).map_err(cfg_err);
        let seed = cfg.get::<u64>("run", "seed").map_err(cfg_err)?;

        let mut paths = Paths::default();
        for key in PATH_KEYS {
            let value = cfg.raw("paths", key).filter(|v| !v.is_empty()).map(PathBuf::from);
            match key {
                "scene" => paths.scene = value,
                "detections" => paths.detections = value,
                "tracks" => paths.tracks = value,
                "truth" => paths.truth = value,
                "truth_positions" => paths.truth_positions = value,
                "localization" => paths.localization = value,
                "poses" => paths.poses = value,
                "depth_dir" => paths.depth_dir = value,
                "images" => paths.images = value,
                _ => paths.features = value,
            }
        }

        let mut corruption = match cfg.raw("corruption", "preset").unwrap_or("default") {
            "default" => default_corruption(),
            "none" => CorruptionConfig::none(),
            other => return Err(CliError::config(format!("[corruption] preset: unknown preset '{other}'"))),
        };
        let c = &mut corruption;
        c.center_noise = cfg.get_or("corruption", "center_noise", c.center_noise).map_err(cfg_err)?;
        c.size_noise = cfg.get_or("corruption", "size_noise", c.size_noise).map_err(cfg_err)?;
        c.score_range = pair(cfg, "corruption", "score_range", c.score_range)?;
        c.low_score_prob = cfg.get_or("corruption", "low_score_prob", c.low_score_prob).map_err(cfg_err)?;
        c.low_score_range = pair(cfg, "corruption", "low_score_range", c.low_score_range)?;
        c.low_score_noise_gain = cfg.get_or("corruption", "low_score_gain", c.low_score_noise_gain).map_err(cfg_err)?;
        c.miss_prob = cfg.get_or("corruption", "miss_prob", c.miss_prob).map_err(cfg_err)?;
        c.embedding_noise = cfg.get_or("corruption", "embedding_noise", c.embedding_noise).map_err(cfg_err)?;
        c.occlusions = occlusions(cfg)?;
        c.seed = match (cfg.get::<u64>("corruption", "seed").map_err(cfg_err)?, seed) {
            (Some(s), _) => s,
            (None, Some(run)) => run.wrapping_add(1),
            (None, None) => c.seed,
        };
        corruption.validate().map_err(cfg_err)?;

        let mut tracker = TrackerConfig::default();
        let t = &mut tracker;
        t.iou_thresh = cfg.get_or("tracker", "iou_thresh", t.iou_thresh).map_err(cfg_err)?;
        t.score_thresh = cfg.get_or("tracker", "score_thresh", t.score_thresh).map_err(cfg_err)?;
        t.smooth_k = cfg.get_or("tracker", "smooth_k", t.smooth_k).map_err(cfg_err)?;
        t.merge_threshold = cfg.get_or("tracker", "merge_threshold", t.merge_threshold).map_err(cfg_err)?;
        let cc = &mut t.connectivity;
        cc.window = cfg.get_or("tracker", "time_window", cc.window).map_err(cfg_err)?;
        cc.w_appearance = cfg.get_or("tracker", "w_appearance", cc.w_appearance).map_err(cfg_err)?;
        cc.w_motion = cfg.get_or("tracker", "w_motion", cc.w_motion).map_err(cfg_err)?;
        cc.w_gap = cfg.get_or("tracker", "w_gap", cc.w_gap).map_err(cfg_err)?;
        cc.motion_sigma = cfg.get_or("tracker", "motion_sigma", cc.motion_sigma).map_err(cfg_err)?;
        cc.velocity_frames = cfg.get_or("tracker", "velocity_frames", cc.velocity_frames).map_err(cfg_err)?;
        tracker.validate().map_err(cfg_err)?;

        let mut filter = DepthFilterConfig::default();
        filter.search.ncc_threshold =
            cfg.get_or("depth", "ncc_thresh", filter.search.ncc_threshold).map_err(cfg_err)?;
        filter.convergence_ratio =
            cfg.get_or("depth", "convergence_ratio", filter.convergence_ratio).map_err(cfg_err)?;
        filter.observation_mean = match cfg.raw("depth", "observation_mean").unwrap_or("triangulated") {
            "triangulated" => ObservationMean::Triangulated,
            "midpoint" => ObservationMean::Midpoint,
            other => return Err(CliError::config(format!("[depth] observation_mean: unknown value '{other}'"))),
        };
        let depth = DepthSettings {
            noise: cfg.get_or("depth", "noise", 0.01).map_err(cfg_err)?,
            seed: match (cfg.get::<u64>("depth", "seed").map_err(cfg_err)?, seed) {
                (Some(s), _) => s,
                (None, Some(run)) => run.wrapping_add(2),
                (None, None) => AblationConfig::default().seed,
            },
            window: cfg.get_or("depth", "window", 30).map_err(cfg_err)?,
            filter,
        };
        if !(depth.noise >= 0.0 && depth.noise < 1.0) {
            return Err(CliError::config("[depth] noise must lie in [0, 1)"));
        }
        if depth.window < 2 {
            return Err(CliError::config("[depth] window must be at least 2 frames"));
        }
        if !(-1.0..=1.0).contains(&depth.filter.search.ncc_threshold) {
            return Err(CliError::config("[depth] ncc_thresh must lie in [-1, 1]"));
        }
        if !(depth.filter.convergence_ratio > 0.0) {
            return Err(CliError::config("[depth] convergence_ratio must be positive"));
        }

        let ground = GroundSettings {
            patch_fraction: cfg.get_or("ground", "patch_frac", DEFAULT_PATCH_FRACTION).map_err(cfg_err)?,
            flat_ground: get_bool("ground", "flat_ground")?,
            height_ref: cfg.get("ground", "height_ref").map_err(cfg_err)?,
        };
        if !(ground.patch_fraction > 0.0 && ground.patch_fraction <= 1.0) {
            return Err(CliError::config("[ground] patch_frac must lie in (0, 1]"));
        }
        if ground.height_ref.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
            return Err(CliError::config("[ground] height_ref must be positive"));
        }

        let hfov: Option<f64> = cfg.get("intrinsics", "hfov").map_err(cfg_err)?;
        if hfov.is_some_and(|h| !(h > 0.0 && h < 180.0)) {
            return Err(CliError::config("[intrinsics] hfov must lie in (0, 180) degrees"));
        }

        let evaluate = EvaluateSettings {
            buckets: cfg.get_list("evaluate", "buckets").map_err(cfg_err)?.unwrap_or_else(|| DEFAULT_BUCKETS.to_vec()),
            ablation: get_bool("evaluate", "ablation")?,
            match_iou: cfg.get_or("evaluate", "match_iou", AblationConfig::default().match_iou).map_err(cfg_err)?,
        };
        let b = &evaluate.buckets;
        if b.iter().any(|e| !(*e > 0.0 && e.is_finite())) || b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("[evaluate] buckets must be positive and strictly increasing"));
        }
        if !(evaluate.match_iou > 0.0 && evaluate.match_iou <= 1.0) {
            return Err(CliError::config("[evaluate] match_iou must lie in (0, 1]"));
        }

        let odometry = OdometrySettings {
            enabled: get_bool("odometry", "enabled")?,
            scale_ref: cfg.get("odometry", "scale_ref").map_err(cfg_err)?,
            keyframe_interval: cfg.get_or("odometry", "keyframe_interval", 10).map_err(cfg_err)?,
        };
        if odometry.scale_ref.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(CliError::config("[odometry] scale_ref must be positive"));
        }
        if odometry.keyframe_interval == 0 {
            return Err(CliError::config("[odometry] keyframe_interval must be at least 1"));
        }

        Ok(Self {
            raw: cfg.clone(),
            seed,
            plot: get_bool("run", "plot")?,
            paths,
            write_depth: get_bool("simulate", "write_depth")?,
            write_images: get_bool("simulate", "write_images")?,
            corruption,
            tracker,
            depth,
            ground,
            hfov,
            literal_intrinsics: get_bool("intrinsics", "literal")?,
            evaluate,
            odometry,
        })
    }

    /// Scene sections embedded in the run config.
    pub fn embedded_scene(&self) -> Option<KeyValueConfig> {
        let mut out = KeyValueConfig::default();
        let mut any = false;
        for (section, _) in SCENE_SECTIONS {
            for (key, _) in self.raw.keys(section) {
                out.set(section, key, self.raw.raw(section, key).unwrap_or_default());
                any = true;
            }
        }
        any.then_some(out)
    }

    /// Scene spec text with the run seed applied.
    pub fn seeded_scene(&self, mut scene: KeyValueConfig) -> CliResult<SceneSpec> {
        if let Some(seed) = self.seed {
            scene.set("scene", "seed", seed);
        }
        SceneSpec::from_config(&scene).map_err(cfg_err)
    }

    /// Intrinsics assumed by localization for images of the scene's size.
    pub fn localization_intrinsics(&self, spec: &SceneSpec) -> CliResult<CameraIntrinsics> {
        let model = if self.literal_intrinsics { FocalModel::Literal } else { FocalModel::Geometric };
        approximate_intrinsics(spec.width, spec.height, self.hfov.unwrap_or(spec.hfov_deg), model).map_err(cfg_err)
    }

    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            corruption: self.corruption.clone(),
            depth_noise: self.depth.noise,
            tracker: self.tracker,
            patch_fraction: self.ground.patch_fraction,
            match_iou: self.evaluate.match_iou,
            buckets: self.evaluate.buckets.clone(),
            flat_height: self.ground.height_ref,
            seed: self.depth.seed,
        }
    }
}

/// Makes relative `[paths]` entries relative to `base`.
pub fn resolve_paths(cfg: &mut KeyValueConfig, base: &Path) {
    let resolved: Vec<(String, String)> = cfg
        .keys("paths")
        .filter_map(|(key, _)| {
            let value = cfg.raw("paths", key)?;
            let p = Path::new(value);
            (!value.is_empty() && p.is_relative()).then(|| (key.to_string(), base.join(p).display().to_string()))
        })
        .collect();
    for (key, value) in resolved {
        cfg.set("paths", &key, value);
    }
}

/// Absolute form of a path given on the command line.
pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}
