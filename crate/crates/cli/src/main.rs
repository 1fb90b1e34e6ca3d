//! `skyloc`: batch front end for simulation, tracking, ground-plane
//! localization and evaluation.

mod commands;
mod error;
mod formats;
mod plot;
mod run;
mod settings;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skyloc_core::config::KeyValueConfig;

use crate::settings::absolute;

#[derive(Debug, Parser)]
#[command(name = "skyloc", version, about = "Monocular drone tracking and 3D localization pipeline")]
pub struct Cli {
    /// Run configuration (`key = value` with `[section]` headers).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the scene seed and derives the noise seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory receiving every output and the manifest.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Rerun from a manifest's configuration snapshot after checking that
    /// its inputs are unchanged.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a synthetic scene bundle.
    Simulate(SimulateArgs),
    /// Track detections into identity-labelled boxes.
    Track(TrackArgs),
    /// Localize track boxes on the ground plane.
    Localize(LocalizeArgs),
    /// Tracking and localization metrics, optionally the ablation study.
    Evaluate(EvaluateArgs),
    /// Every stage in sequence on a synthetic scene.
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Track(_) => "track",
            Command::Localize(_) => "localize",
            Command::Evaluate(_) => "evaluate",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

fn set_path(cfg: &mut KeyValueConfig, key: &str, value: &Option<PathBuf>) {
    if let Some(p) = value {
        cfg.set("paths", key, absolute(p).display());
    }
}

/// Fills unset `[paths]` entries from a bundle directory; optional files only
/// when present.
fn bundle_defaults(cfg: &mut KeyValueConfig, bundle: &Option<PathBuf>, required: &[(&str, &str)], optional: &[(&str, &str)]) {
    let Some(dir) = bundle else { return };
    let dir = absolute(dir);
    for (key, file) in required {
        cfg.set("paths", key, dir.join(file).display());
    }
    for (key, file) in optional {
        let p = dir.join(file);
        if p.exists() {
            cfg.set("paths", key, p.display());
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene spec file.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub depth: DepthFlags,
    /// Also write rendered frames as PGM.
    #[arg(long)]
    pub write_images: bool,
    /// Also write per-frame depth rasters.
    #[arg(long)]
    pub write_depth: bool,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Bundle directory providing `detections.csv`.
    #[arg(long, value_name = "DIR")]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub detections: Option<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Bundle directory providing `tracks.csv`, `scene.cfg` and, when
    /// present, `poses.txt` and `depth/`.
    #[arg(long, value_name = "DIR")]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub tracks: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub scene: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub poses: Option<PathBuf>,
    /// Directory of `depth_NNNNN.dpth` rasters; synthetic depth otherwise.
    #[arg(long, value_name = "DIR")]
    pub depth_dir: Option<PathBuf>,
    #[command(flatten)]
    pub ground: GroundFlags,
    #[command(flatten)]
    pub depth: DepthFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Bundle directory providing `tracks.csv`, `truth_detections.csv` and,
    /// when present, `localization.csv`, `truth_positions.csv`, `scene.cfg`.
    #[arg(long, value_name = "DIR")]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub tracks: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub localization: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub truth_positions: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub scene: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[command(flatten)]
    pub ground: GroundFlags,
    #[command(flatten)]
    pub tracker: TrackerFlags,
    #[command(flatten)]
    pub depth: DepthFlags,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Scene spec file; the config's scene sections or defaults otherwise.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
    #[command(flatten)]
    pub ground: GroundFlags,
    #[command(flatten)]
    pub depth: DepthFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Run visual odometry and the depth filter over the first frames.
    #[arg(long)]
    pub odometry: bool,
    /// Metric scale reference for odometry: camera height, meters.
    #[arg(long, value_name = "M")]
    pub scale_ref: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrackerFlags {
    #[arg(long)]
    pub iou_thresh: Option<f64>,
    /// Largest gap bridged between tracklets, frames.
    #[arg(long)]
    pub time_window: Option<usize>,
    #[arg(long)]
    pub score_thresh: Option<f64>,
    #[arg(long)]
    pub smooth_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GroundFlags {
    /// Assume the image y axis is vertical at the reference height.
    #[arg(long)]
    pub flat_ground: bool,
    /// Camera height above ground, meters; rescales the estimated plane.
    #[arg(long, value_name = "M")]
    pub height_ref: Option<f64>,
    /// Ground patch size as a fraction of the box.
    #[arg(long)]
    pub patch_frac: Option<f64>,
    /// Use the arctangent focal-length formula instead of the pinhole one.
    #[arg(long)]
    pub literal_intrinsics: bool,
    /// Horizontal field of view, degrees.
    #[arg(long)]
    pub hfov: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DepthFlags {
    /// Depth-filter window, frames.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub ncc_thresh: Option<f64>,
    /// Relative std of the noise on synthetic depth.
    #[arg(long)]
    pub depth_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    /// Distance bucket edges, meters, e.g. `10,25`.
    #[arg(long, value_name = "EDGES")]
    pub buckets: Option<String>,
    /// Also run the three-variant localization ablation.
    #[arg(long)]
    pub ablation: bool,
}

impl TrackerFlags {
    fn apply(&self, cfg: &mut KeyValueConfig) {
        let s = "tracker";
        if let Some(v) = self.iou_thresh {
            cfg.set(s, "iou_thresh", v);
        }
        if let Some(v) = self.time_window {
            cfg.set(s, "time_window", v);
        }
        if let Some(v) = self.score_thresh {
            cfg.set(s, "score_thresh", v);
        }
        if let Some(v) = self.smooth_k {
            cfg.set(s, "smooth_k", v);
        }
    }
}

impl GroundFlags {
    fn apply(&self, cfg: &mut KeyValueConfig) {
        if self.flat_ground {
            cfg.set("ground", "flat_ground", true);
        }
        if let Some(v) = self.height_ref {
            cfg.set("ground", "height_ref", v);
        }
        if let Some(v) = self.patch_frac {
            cfg.set("ground", "patch_frac", v);
        }
        if self.literal_intrinsics {
            cfg.set("intrinsics", "literal", true);
        }
        if let Some(v) = self.hfov {
            cfg.set("intrinsics", "hfov", v);
        }
    }
}

impl DepthFlags {
    fn apply(&self, cfg: &mut KeyValueConfig) {
        if let Some(v) = self.window {
            cfg.set("depth", "window", v);
        }
        if let Some(v) = self.ncc_thresh {
            cfg.set("depth", "ncc_thresh", v);
        }
        if let Some(v) = self.depth_noise {
            cfg.set("depth", "noise", v);
        }
    }
}

impl EvalFlags {
    fn apply(&self, cfg: &mut KeyValueConfig) {
        if let Some(v) = &self.buckets {
            cfg.set("evaluate", "buckets", v);
        }
        if self.ablation {
            cfg.set("evaluate", "ablation", true);
        }
    }
}

impl Command {
    /// Folds the subcommand's flags into the effective configuration.
    pub fn apply(&self, cfg: &mut KeyValueConfig) {
        match self {
            Command::Simulate(a) => {
                set_path(cfg, "scene", &a.spec);
                a.depth.apply(cfg);
                if a.write_images {
                    cfg.set("simulate", "write_images", true);
                }
                if a.write_depth {
                    cfg.set("simulate", "write_depth", true);
                }
            }
            Command::Track(a) => {
                bundle_defaults(cfg, &a.bundle, &[("detections", "detections.csv")], &[]);
                set_path(cfg, "detections", &a.detections);
                a.tracker.apply(cfg);
            }
            Command::Localize(a) => {
                bundle_defaults(
                    cfg,
                    &a.bundle,
                    &[("tracks", "tracks.csv"), ("scene", "scene.cfg")],
                    &[("poses", "poses.txt"), ("depth_dir", "depth")],
                );
                set_path(cfg, "tracks", &a.tracks);
                set_path(cfg, "scene", &a.scene);
                set_path(cfg, "poses", &a.poses);
                set_path(cfg, "depth_dir", &a.depth_dir);
                a.ground.apply(cfg);
                a.depth.apply(cfg);
            }
            Command::Evaluate(a) => {
                bundle_defaults(
                    cfg,
                    &a.bundle,
                    &[("tracks", "tracks.csv"), ("truth", "truth_detections.csv")],
                    &[
                        ("localization", "localization.csv"),
                        ("truth_positions", "truth_positions.csv"),
                        ("scene", "scene.cfg"),
                    ],
                );
                set_path(cfg, "tracks", &a.tracks);
                set_path(cfg, "truth", &a.truth);
                set_path(cfg, "localization", &a.localization);
                set_path(cfg, "truth_positions", &a.truth_positions);
                set_path(cfg, "scene", &a.scene);
                a.eval.apply(cfg);
                a.ground.apply(cfg);
                a.tracker.apply(cfg);
                a.depth.apply(cfg);
            }
            Command::Pipeline(a) => {
                set_path(cfg, "scene", &a.spec);
                a.tracker.apply(cfg);
                a.ground.apply(cfg);
                a.depth.apply(cfg);
                a.eval.apply(cfg);
                if a.odometry {
                    cfg.set("odometry", "enabled", true);
                }
                if let Some(v) = a.scale_ref {
                    cfg.set("odometry", "scale_ref", v);
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
