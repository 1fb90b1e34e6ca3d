//! Subcommand drivers: build the effective configuration, validate it and
//! load every input, then take the run directory, compute and commit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use skyloc_core::config::KeyValueConfig;
use skyloc_core::eval::Localization;
use skyloc_core::geometry::{read_poses, Pose};
use skyloc_core::image::IntensityImage;
use skyloc_core::synth::{build_scene, ScenarioTruth, SceneSpec};
use skyloc_core::tracker::{read_detections, Detection};

use crate::error::{CliError, CliResult, StageExt};
use crate::formats::read_localizations;
use crate::run::{digest_path, FileDigest, Outputs, RunDir, RunManifest};
use crate::settings::{resolve_paths, Settings, SCENE_SECTIONS};
use crate::stages::{self, DepthSource, EvaluateInputs, MotionInputs};
use crate::{Cli, Command};

type Inputs = BTreeMap<String, FileDigest>;

/// Configuration from `--manifest` or `--config`, before flag overrides.
fn base_config(cli: &Cli) -> CliResult<(KeyValueConfig, Option<RunManifest>)> {
    if let Some(path) = &cli.manifest {
        let manifest = RunManifest::read(path)?;
        if manifest.command != cli.command.name() {
            return Err(CliError::config(format!(
                "manifest {} records a '{}' run, not '{}'",
                path.display(),
                manifest.command,
                cli.command.name()
            )));
        }
        let cfg = KeyValueConfig::parse(&manifest.config).map_err(|e| CliError::config_file(path, e))?;
        return Ok((cfg, Some(manifest)));
    }
    let Some(path) = &cli.config else {
        return Ok((KeyValueConfig::default(), None));
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config_file(path, e))?;
    let mut cfg = KeyValueConfig::parse(&text).map_err(|e| CliError::config_file(path, e))?;
    let base = crate::settings::absolute(path).parent().map(Path::to_path_buf).unwrap_or_default();
    resolve_paths(&mut cfg, &base);
    Ok((cfg, None))
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    let (mut cfg, replay) = base_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.set("run", "seed", seed);
    }
    if cli.plot {
        cfg.set("run", "plot", true);
    }
    cli.command.apply(&mut cfg);
    let settings = Settings::from_config(&cfg)?;
    let out = cli.out.as_ref().ok_or_else(|| CliError::config("--out <dir> is required"))?;
    if let Some(manifest) = &replay {
        manifest.verify_inputs()?;
    }
    let mut inputs = Inputs::new();
    if let Some(path) = &cli.config {
        inputs.insert("config".into(), digest_path(path)?);
    }
    let run = Run { settings, out, inputs };
    match &cli.command {
        Command::Simulate(_) => run.simulate(),
        Command::Track(_) => run.track(),
        Command::Localize(_) => run.localize(),
        Command::Evaluate(_) => run.evaluate(),
        Command::Pipeline(_) => run.pipeline(),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

fn load_detections(path: &Path) -> CliResult<Vec<Detection>> {
    read_detections(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

fn load_localizations(path: &Path) -> CliResult<Vec<Localization>> {
    read_localizations(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

fn load_poses(path: &Path) -> CliResult<BTreeMap<usize, Pose>> {
    Ok(read_poses(&read_text(path)?).map_err(|e| CliError::input(path, e))?.into_iter().collect())
}

/// Rejects boxes in frames the scene does not have.
fn check_frames(path: &Path, dets: &[Detection], frames: usize) -> CliResult<()> {
    match dets.iter().find(|d| d.frame >= frames) {
        Some(d) => Err(CliError::input(
            path,
            skyloc_core::Error::invalid(format!("frame {} beyond the scene's {frames} frames", d.frame)),
        )),
        None => Ok(()),
    }
}

struct Run<'a> {
    settings: Settings,
    out: &'a Path,
    inputs: Inputs,
}

impl Run<'_> {
    fn record(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.inputs.insert(role.to_string(), digest_path(path)?);
        Ok(())
    }

    /// Scene spec from `[paths] scene`, the config's scene sections, or the
    /// defaults; `seeded` applies the run seed (only when building a scene).
    fn scene(&mut self, seeded: bool, required: bool) -> CliResult<SceneSpec> {
        let (cfg, origin) = match self.settings.paths.scene.clone() {
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::config_file(&path, e))?;
                let cfg = KeyValueConfig::parse(&text).map_err(|e| CliError::config_file(&path, e))?;
                if let Some(s) = cfg.section_names().find(|s| !SCENE_SECTIONS.iter().any(|(n, _)| n == s)) {
                    return Err(CliError::config(format!("{}: section [{s}] is not a scene section", path.display())));
                }
                self.record("scene", &path)?;
                (cfg, Some(path))
            }
            None if required => return Err(self.settings.paths.require("scene").unwrap_err()),
            None => (self.settings.embedded_scene().unwrap_or_default(), None),
        };
        let with_origin = |e: CliError| match (&origin, e) {
            (Some(p), CliError::Config(m)) => CliError::config(format!("{}: {m}", p.display())),
            (_, e) => e,
        };
        if seeded {
            self.settings.seeded_scene(cfg).map_err(with_origin)
        } else {
            SceneSpec::from_config(&cfg).map_err(|e| with_origin(CliError::config(e.to_string())))
        }
    }

    fn required(&mut self, key: &str) -> CliResult<PathBuf> {
        let path = self.settings.paths.require(key)?.clone();
        self.record(key, &path)?;
        Ok(path)
    }

    fn optional(&mut self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.settings.paths.get(key).cloned() {
            Some(path) => {
                self.record(key, &path)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }

    fn commit(self, command: &str, dir: RunDir, outputs: Outputs) -> CliResult<()> {
        dir.commit(command, self.settings.raw.to_text(), self.inputs, outputs)?;
        Ok(())
    }

    fn simulate(mut self) -> CliResult<String> {
        let scene = self.scene(true, false)?;
        let dir = RunDir::acquire(self.out)?;
        let mut outputs = Outputs::default();
        let truth = outputs.timed("simulate", |o| stages::simulate(&self.settings, &scene, o))?;
        let summary = format!(
            "simulate: {} frames, {} objects, {} truth boxes\n",
            truth.frame_count(),
            truth.objects.len(),
            truth.observations.iter().map(Vec::len).sum::<usize>()
        );
        self.commit("simulate", dir, outputs)?;
        Ok(summary)
    }

    fn track(mut self) -> CliResult<String> {
        let path = self.required("detections")?;
        let detections = load_detections(&path)?;
        let dir = RunDir::acquire(self.out)?;
        let mut outputs = Outputs::default();
        let tracks = outputs.timed("track", |o| stages::track(&self.settings, &detections, o))?;
        let ids: std::collections::BTreeSet<i64> = tracks.iter().map(|d| d.id).collect();
        let summary = format!("track: {} detections -> {} tracks, {} boxes\n", detections.len(), ids.len(), tracks.len());
        self.commit("track", dir, outputs)?;
        Ok(summary)
    }

    fn localize(mut self) -> CliResult<String> {
        let tracks_path = self.required("tracks")?;
        let tracks = load_detections(&tracks_path)?;
        let scene = self.scene(false, true)?;
        check_frames(&tracks_path, &tracks, scene.frames)?;
        let poses = match self.optional("poses")? {
            Some(p) => Some(load_poses(&p)?),
            None => None,
        };
        let depth_dir = self.optional("depth_dir")?;
        let k = self.settings.localization_intrinsics(&scene)?;
        let dir = RunDir::acquire(self.out)?;
        let mut outputs = Outputs::default();
        let truth;
        let depth = match depth_dir {
            Some(d) => depth_files(d, &scene),
            None => {
                truth = outputs.timed("scene", |_| build_scene(&scene).stage("scene"))?;
                synthetic_depth(&self.settings, &truth)
            }
        };
        let (_, s) = outputs.timed("localize", |o| {
            stages::localize(&self.settings, &scene, &k, &depth, &tracks, poses.as_ref(), o)
        })?;
        self.commit("localize", dir, outputs)?;
        Ok(format!("localize: {} boxes localized, {} failed, {} frames reused a plane\n", s.localized, s.failed, s.reused_planes))
    }

    fn evaluate(mut self) -> CliResult<String> {
        let tracks = load_detections(&self.required("tracks")?)?;
        let truth = load_detections(&self.required("truth")?)?;
        let localization = match (self.optional("localization")?, self.optional("truth_positions")?) {
            (Some(e), Some(t)) => Some((load_localizations(&e)?, load_localizations(&t)?)),
            (None, None) => None,
            (Some(_), None) => return Err(CliError::config("localization given without truth_positions")),
            (None, Some(_)) => {
                log::info!("no localization input; skipping the localization report");
                None
            }
        };
        let scene = if self.settings.evaluate.ablation { Some(self.scene(false, true)?) } else { None };
        let dir = RunDir::acquire(self.out)?;
        let mut outputs = Outputs::default();
        let scene_truth = match &scene {
            Some(s) => Some(outputs.timed("scene", |_| build_scene(s).stage("scene"))?),
            None => None,
        };
        let inputs = EvaluateInputs {
            tracks: &tracks,
            truth: &truth,
            localization: localization.as_ref().map(|(e, t)| (e.as_slice(), t.as_slice())),
            scene: scene_truth.as_ref(),
        };
        let summary = outputs.timed("evaluate", |o| stages::evaluate(&self.settings, &inputs, o))?;
        self.commit("evaluate", dir, outputs)?;
        Ok(summary)
    }

    fn pipeline(mut self) -> CliResult<String> {
        let scene = self.scene(true, false)?;
        let depth_dir = self.optional("depth_dir")?;
        let images_dir = if self.settings.odometry.enabled { self.optional("images")? } else { None };
        let features_file = if self.settings.odometry.enabled { self.optional("features")? } else { None };
        let k = self.settings.localization_intrinsics(&scene)?;
        let dir = RunDir::acquire(self.out)?;
        let mut outputs = Outputs::default();
        let s = &self.settings;
        let truth = outputs.timed("simulate", |o| stages::simulate(s, &scene, o))?;
        // Later stages read the bundle as written, exactly as the standalone
        // subcommands would.
        let detections = read_detections(&output_text(&outputs, "detections.csv")).stage("pipeline")?;
        let truth_dets = read_detections(&output_text(&outputs, "truth_detections.csv")).stage("pipeline")?;
        let truth_pos = read_localizations(&output_text(&outputs, "truth_positions.csv")).stage("pipeline")?;
        let poses: BTreeMap<usize, Pose> =
            read_poses(&output_text(&outputs, "poses.txt")).stage("pipeline")?.into_iter().collect();

        let tracks = outputs.timed("track", |o| stages::track(s, &detections, o))?;
        let depth = match depth_dir {
            Some(d) => depth_files(d, &scene),
            None => synthetic_depth(s, &truth),
        };
        let (est, loc) =
            outputs.timed("localize", |o| stages::localize(s, &scene, &k, &depth, &tracks, Some(&poses), o))?;
        let mut summary = format!("localize: {} boxes localized, {} failed\n", loc.localized, loc.failed);
        let inputs = EvaluateInputs {
            tracks: &tracks,
            truth: &truth_dets,
            localization: Some((&est, &truth_pos)),
            scene: Some(&truth),
        };
        summary.push_str(&outputs.timed("evaluate", |o| stages::evaluate(s, &inputs, o))?);
        if s.odometry.enabled {
            let n = s.depth.window.min(truth.frame_count());
            let images = match &images_dir {
                Some(d) => load_images(d, n)?,
                None => (0..n).map(|f| truth.render_frame(f)).collect::<Result<_, _>>().stage("render")?,
            };
            let provider = stages::feature_provider(&truth, features_file.as_deref())?;
            let motion = MotionInputs {
                images,
                k: &k,
                features: provider.as_ref(),
                truth_poses: Some(&truth.poses),
            };
            summary.push('\n');
            summary.push_str(&outputs.timed("motion", |o| stages::motion(s, &scene, &motion, o))?);
        }
        self.commit("pipeline", dir, outputs)?;
        Ok(summary)
    }
}

fn synthetic_depth<'a>(settings: &Settings, truth: &'a ScenarioTruth) -> DepthSource<'a> {
    DepthSource::Synthetic {
        truth,
        noise: settings.depth.noise,
        seed: settings.depth.seed,
    }
}

fn depth_files(dir: PathBuf, spec: &SceneSpec) -> DepthSource<'static> {
    DepthSource::Files {
        dir,
        width: spec.width,
        height: spec.height,
    }
}

fn output_text(outputs: &Outputs, name: &str) -> String {
    String::from_utf8_lossy(outputs.get(name).unwrap_or_default()).into_owned()
}

fn load_images(dir: &Path, n: usize) -> CliResult<Vec<IntensityImage>> {
    (0..n)
        .map(|f| {
            let path = dir.join(stages::image_file_name(f));
            let file = std::fs::File::open(&path).map_err(|e| CliError::input(&path, e))?;
            IntensityImage::read_pgm(std::io::BufReader::new(file)).map_err(|e| CliError::input(&path, e))
        })
        .collect()
}
