//! Pipeline stages. Each computes in memory and hands its files to
//! [`Outputs`]; nothing is written here.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::Point3;
use skyloc_core::alignment::{
    initialize_depth_map, track_sequence, FeatureProvider, FeatureTable, MapInitConfig, OdometryConfig,
    ScaleReference,
};
use skyloc_core::depth::{run_depth_window, DenseDepthMap, WindowFrame};
use skyloc_core::eval::{
    ablation_run, frame_assignments, localization_report, mot_metrics, noisy_depth, Localization, MotMetrics,
    CSV_HEADER,
};
use skyloc_core::geometry::{write_poses, CameraIntrinsics, Pose};
use skyloc_core::ground::{backproject_footpoint, estimate_ground, GroundPlane};
use skyloc_core::image::IntensityImage;
use skyloc_core::synth::{build_scene, corrupt_detections, ScenarioTruth, SceneSpec, SyntheticFeatures};
use skyloc_core::tracker::{
    group_by_frame, read_detections, track_pipeline, write_detections, write_tracks, Detection, MotionModel,
};

use crate::error::{CliError, CliResult, StageExt};
use crate::formats::write_localizations;
use crate::plot::top_view_svg;
use crate::run::Outputs;
use crate::settings::Settings;

pub fn depth_file_name(frame: usize) -> String {
    format!("depth_{frame:05}.dpth")
}

pub fn image_file_name(frame: usize) -> String {
    format!("frame_{frame:05}.pgm")
}

/// Camera-frame footpoints of every truth observation.
pub fn truth_positions(truth: &ScenarioTruth) -> Vec<Localization> {
    truth
        .observations
        .iter()
        .enumerate()
        .flat_map(|(frame, obs)| {
            obs.iter().map(move |o| Localization {
                frame,
                id: o.object as i64,
                position: o.footpoint_camera,
            })
        })
        .collect()
}

/// Builds the scene and writes the bundle: scene spec, truth and corrupted
/// detections, camera poses, truth positions, and optionally rendered
/// frames and depth rasters.
pub fn simulate(settings: &Settings, spec: &SceneSpec, out: &mut Outputs) -> CliResult<ScenarioTruth> {
    let truth = build_scene(spec).stage("simulate")?;
    let detections = corrupt_detections(&truth, &settings.corruption).stage("simulate")?;
    out.add("scene.cfg", spec.to_config().to_text());
    out.add("truth_detections.csv", write_detections(&truth.detections()));
    out.add("detections.csv", write_detections(&detections));
    out.add("poses.txt", write_poses(truth.poses.iter().enumerate()));
    out.add("truth_positions.csv", write_localizations(&truth_positions(&truth)));
    for f in 0..truth.frame_count() {
        if settings.write_images {
            let mut buf = Vec::new();
            truth.render_frame(f).and_then(|img| img.write_pgm(&mut buf)).stage("simulate")?;
            out.add(format!("images/{}", image_file_name(f)), buf);
        }
        if settings.write_depth {
            let mut buf = Vec::new();
            noisy_depth(&truth, f, settings.depth.noise, settings.depth.seed)
                .and_then(|d| d.write(&mut buf))
                .stage("simulate")?;
            out.add(format!("depth/{}", depth_file_name(f)), buf);
        }
    }
    Ok(truth)
}

/// Tracks detections and returns the track rows as written.
pub fn track(settings: &Settings, detections: &[Detection], out: &mut Outputs) -> CliResult<Vec<Detection>> {
    let tracks = track_pipeline(detections, &MotionModel::identity(), &settings.tracker).stage("track")?;
    let text = write_tracks(&tracks);
    let rows = read_detections(&text).stage("track")?;
    out.add("tracks.csv", text);
    Ok(rows)
}

/// Where per-frame depth comes from.
pub enum DepthSource<'a> {
    /// Truth depth with multiplicative noise.
    Synthetic { truth: &'a ScenarioTruth, noise: f64, seed: u64 },
    /// `depth_NNNNN.dpth` rasters in a directory.
    Files { dir: PathBuf, width: usize, height: usize },
}

impl DepthSource<'_> {
    pub fn frame(&self, frame: usize) -> CliResult<DenseDepthMap> {
        match self {
            DepthSource::Synthetic { truth, noise, seed } => noisy_depth(truth, frame, *noise, *seed).stage("localize"),
            DepthSource::Files { dir, width, height } => {
                let path = dir.join(depth_file_name(frame));
                let file = File::open(&path).map_err(|e| CliError::input(&path, e))?;
                let depth = DenseDepthMap::read(BufReader::new(file)).map_err(|e| CliError::input(&path, e))?;
                if (depth.width(), depth.height()) != (*width, *height) {
                    return Err(CliError::input(
                        &path,
                        skyloc_core::Error::invalid(format!(
                            "raster is {}x{}, images are {width}x{height}",
                            depth.width(),
                            depth.height()
                        )),
                    ));
                }
                Ok(depth)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalizeSummary {
    pub localized: usize,
    /// Boxes whose footpoint ray misses the ground or lacked any plane.
    pub failed: usize,
    /// Frames that reused the previous frame's plane.
    pub reused_planes: usize,
}

/// 3D footpoint of every track box, on the estimated (or flat) ground plane
/// of its frame. A frame without a usable estimate reuses the last plane.
pub fn localize(
    settings: &Settings,
    spec: &SceneSpec,
    k: &CameraIntrinsics,
    depth: &DepthSource,
    tracks: &[Detection],
    poses: Option<&BTreeMap<usize, Pose>>,
    out: &mut Outputs,
) -> CliResult<(Vec<Localization>, LocalizeSummary)> {
    let g = &settings.ground;
    let flat = if g.flat_ground {
        Some(GroundPlane::flat(g.height_ref.unwrap_or(spec.camera_height)).stage("localize")?)
    } else {
        None
    };
    let mut summary = LocalizeSummary::default();
    let mut rows = Vec::new();
    let mut last: Option<GroundPlane> = None;
    for (frame, dets) in group_by_frame(tracks, spec.frames).iter().enumerate() {
        if dets.is_empty() {
            continue;
        }
        let plane = match &flat {
            Some(p) => p.clone(),
            None => match estimate_ground(dets, &depth.frame(frame)?, k, g.height_ref, g.patch_fraction) {
                Ok(est) => {
                    last = Some(est.plane.clone());
                    est.plane
                }
                Err(e) if e.is_data_error() || e.is_numerical() => match &last {
                    Some(p) => {
                        log::debug!("frame {frame}: reusing previous plane ({e})");
                        summary.reused_planes += 1;
                        p.clone()
                    }
                    None => {
                        log::warn!("frame {frame}: no ground plane yet ({e}); {} boxes skipped", dets.len());
                        summary.failed += dets.len();
                        continue;
                    }
                },
                Err(e) => {
                    return Err(CliError::Stage {
                        stage: "localize",
                        source: e.at_frame(frame),
                    })
                }
            },
        };
        for d in dets {
            match backproject_footpoint(&d.bbox.footpoint(), &plane, k) {
                Ok(position) => rows.push(Localization { frame, id: d.id, position }),
                Err(e) => {
                    log::debug!("frame {frame} track {}: {e}", d.id);
                    summary.failed += 1;
                }
            }
        }
    }
    summary.localized = rows.len();
    out.add("localization.csv", write_localizations(&rows));
    if settings.plot {
        let mut by_track: BTreeMap<i64, Vec<(usize, Point3<f64>)>> = BTreeMap::new();
        for r in &rows {
            let p = match poses.and_then(|p| p.get(&r.frame)) {
                Some(pose) => pose.transform_point(&r.position),
                None => r.position,
            };
            by_track.entry(r.id).or_default().push((r.frame, p));
        }
        out.add("localization.svg", top_view_svg(&by_track));
    }
    Ok((rows, summary))
}

pub const MOT_CSV_HEADER: &str =
    "mota,idf1,idp,idr,mostly_tracked,mostly_lost,false_positives,false_negatives,id_switches,truth_boxes,hyp_boxes,truth_tracks";

pub fn mot_table(m: &MotMetrics) -> String {
    let mut s = format!(
        "{:>8} {:>8} {:>8} {:>8} {:>6} {:>6} {:>8} {:>8} {:>6}\n",
        "MOTA", "IDF1", "IDP", "IDR", "MT", "ML", "FP", "FN", "IDsw"
    );
    let _ = writeln!(
        s,
        "{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6} {:>8} {:>8} {:>6}",
        m.mota, m.idf1, m.idp, m.idr, m.mostly_tracked, m.mostly_lost, m.false_positives, m.false_negatives, m.id_switches
    );
    s
}

pub fn mot_csv(m: &MotMetrics) -> String {
    format!(
        "{MOT_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
        m.mota,
        m.idf1,
        m.idp,
        m.idr,
        m.mostly_tracked,
        m.mostly_lost,
        m.false_positives,
        m.false_negatives,
        m.id_switches,
        m.truth_boxes,
        m.hyp_boxes,
        m.truth_tracks
    )
}

/// Estimates keyed by track id, relabelled with the truth id their box was
/// matched to in the same frame; unmatched estimates are dropped.
pub fn relabel_to_truth(est: &[Localization], tracks: &[Detection], truth: &[Detection]) -> CliResult<Vec<Localization>> {
    let mut map: BTreeMap<(usize, i64), i64> = BTreeMap::new();
    for a in frame_assignments(tracks, truth).stage("evaluate")? {
        for (t, h) in a.matches {
            map.insert((a.frame, h), t);
        }
    }
    Ok(est
        .iter()
        .filter_map(|e| map.get(&(e.frame, e.id)).map(|t| Localization { id: *t, ..*e }))
        .collect())
}

pub fn localization_method(settings: &Settings) -> &'static str {
    if settings.ground.flat_ground {
        "Det+Trk+Flat_Ground"
    } else {
        "Det+Trk+Ground_Est"
    }
}

/// Inputs of [`evaluate`] beyond the tracking pair.
pub struct EvaluateInputs<'a> {
    pub tracks: &'a [Detection],
    pub truth: &'a [Detection],
    /// Estimated and true positions.
    pub localization: Option<(&'a [Localization], &'a [Localization])>,
    /// Scene for the ablation study.
    pub scene: Option<&'a ScenarioTruth>,
}

/// Writes the metric tables and returns them as printable text.
pub fn evaluate(settings: &Settings, inputs: &EvaluateInputs, out: &mut Outputs) -> CliResult<String> {
    let m = mot_metrics(inputs.tracks, inputs.truth).stage("evaluate")?;
    let mut summary = mot_table(&m);
    out.add("mot.txt", mot_table(&m));
    out.add("mot.csv", mot_csv(&m));
    if let Some((est, truth_pos)) = inputs.localization {
        let relabelled = relabel_to_truth(est, inputs.tracks, inputs.truth)?;
        let report = localization_report(&relabelled, truth_pos, &settings.evaluate.buckets).stage("evaluate")?;
        let name = localization_method(settings);
        let table = format!("{}\n{}\n", report.table_header(), report.table_row(name));
        summary.push('\n');
        summary.push_str(&table);
        out.add("localization_report.txt", table);
        out.add("localization_report.csv", format!("{CSV_HEADER}\n{}", report.csv_rows(name)));
    }
    if settings.evaluate.ablation {
        let truth = inputs
            .scene
            .ok_or_else(|| CliError::config("ablation needs the scene: set [paths] scene or pass --scene/--bundle"))?;
        let report = ablation_run(truth, &settings.ablation_config()).stage("ablation")?;
        summary.push('\n');
        summary.push_str(&report.table());
        out.add("ablation.txt", report.table());
        out.add("ablation.csv", report.csv());
    }
    Ok(summary)
}

/// Frames, camera and features for the motion stage.
pub struct MotionInputs<'a> {
    pub images: Vec<IntensityImage>,
    pub k: &'a CameraIntrinsics,
    pub features: &'a dyn FeatureProvider,
    /// Truth `world_from_camera` poses for the error report.
    pub truth_poses: Option<&'a [Pose]>,
}

/// Direct visual odometry over the first frames, then the depth filter over
/// the same window with the estimated poses.
pub fn motion(settings: &Settings, spec: &SceneSpec, inputs: &MotionInputs, out: &mut Outputs) -> CliResult<String> {
    let cfg = OdometryConfig {
        keyframe_interval: settings.odometry.keyframe_interval,
        seed: settings.depth.seed,
        ..OdometryConfig::default()
    };
    let scale = ScaleReference::CameraHeight(settings.odometry.scale_ref.unwrap_or(spec.camera_height));
    let poses = track_sequence(&inputs.images, inputs.k, inputs.features, scale, &cfg).stage("odometry")?;
    out.add("odometry_poses.txt", write_poses(poses.iter().enumerate()));
    let mut summary = String::new();
    if let Some(truth) = inputs.truth_poses {
        let mut csv = String::from("frame,position_error_m\n");
        let mut worst: f64 = 0.0;
        for (f, est) in poses.iter().enumerate() {
            let rel = truth[0].inverse() * truth[f];
            let err = (est.translation() - rel.translation()).norm();
            worst = worst.max(err);
            let _ = writeln!(csv, "{f},{err}");
        }
        out.add("odometry_error.csv", csv);
        let _ = writeln!(summary, "odometry: {} frames, worst position error {worst:.4} m", poses.len());
    }
    let features = inputs.features.features(0).stage("depth")?;
    let seeds = initialize_depth_map(&inputs.images[0], &features, settings.depth.seed, &MapInitConfig::default())
        .stage("depth")?;
    let frames: Vec<WindowFrame> = inputs
        .images
        .iter()
        .zip(&poses)
        .enumerate()
        .map(|(index, (image, pose))| WindowFrame { index, image, world_from_camera: *pose })
        .collect();
    let window = run_depth_window(&frames, &seeds, inputs.k, &settings.depth.filter).stage("depth")?;
    let mut csv = String::from("x,y,depth,sigma,converged\n");
    for s in &window.seeds {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            s.pixel.x,
            s.pixel.y,
            s.hypothesis.mu,
            s.hypothesis.sigma(),
            u8::from(s.converged)
        );
    }
    out.add("depth_seeds.csv", csv);
    let mut raster = Vec::new();
    window.dense.write(&mut raster).stage("depth")?;
    out.add("depth_frame0.dpth", raster);
    let _ = writeln!(
        summary,
        "depth: {} seeds, {:.3} converged, {} dense pixels",
        window.seeds.len(),
        window.converged_fraction(),
        window.dense.known_count()
    );
    Ok(summary)
}

/// Synthetic features for a scene, or a feature file.
pub fn feature_provider(truth: &ScenarioTruth, file: Option<&Path>) -> CliResult<Box<dyn FeatureProvider>> {
    match file {
        None => Ok(Box::new(SyntheticFeatures::new(truth))),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
            Ok(Box::new(FeatureTable::parse(&text).map_err(|e| CliError::input(path, e))?))
        }
    }
}
