use nalgebra::Point2;

use super::{
    estimate_relative_pose, initialize_depth_map, match_features, two_view_pose, AlignmentConfig,
    FeaturePoint, FeatureProvider, MapEntry, MapInitConfig, SparseDepthMap,
};
use crate::depth::{measurement_moments, MomentGeometry};
use crate::error::{Error, Result};
use crate::geometry::{relative_pose, triangulate_point, CameraIntrinsics, Pose};
use crate::ground::{fit_plane, GroundSample};
use crate::image::IntensityImage;

/// External input fixing the monocular scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleReference {
    /// Mean z-depth of the initial triangulated features, meters.
    MeanDepth(f64),
    /// Camera height above the plane through the initial features, meters.
    CameraHeight(f64),
}

impl ScaleReference {
    fn value(&self) -> f64 {
        match *self {
            Self::MeanDepth(v) | Self::CameraHeight(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryConfig {
    pub alignment: AlignmentConfig,
    pub map_init: MapInitConfig,
    /// A new keyframe (and depth map) every this many frames.
    pub keyframe_interval: usize,
    /// Median feature displacement required before initializing, pixels.
    pub min_bootstrap_flow: f64,
    pub match_ratio: f64,
    /// Minimum angle between triangulation rays, radians.
    pub min_ray_angle: f64,
    /// Floor on triangulated depth standard deviation, meters.
    pub sigma_floor: f64,
    pub seed: u64,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            alignment: AlignmentConfig::default(),
            map_init: MapInitConfig::default(),
            keyframe_interval: 10,
            min_bootstrap_flow: 8.0,
            match_ratio: 0.8,
            min_ray_angle: crate::geometry::DEFAULT_MIN_RAY_ANGLE_DEG.to_radians(),
            sigma_floor: 1e-4,
            seed: 0,
        }
    }
}

struct Keyframe {
    world_from_camera: Pose,
    features: Vec<FeaturePoint>,
    /// Entry `i` belongs to `features[i]`.
    map: SparseDepthMap,
}

/// Gaussian product in inverse depth.
fn fuse_inverse(entry: &mut MapEntry, rho: f64, var: f64) {
    let total = entry.inv_variance + var;
    entry.inv_depth = (var * entry.inv_depth + entry.inv_variance * rho) / total;
    entry.inv_variance = entry.inv_variance * var / total;
}

/// Depth measurement of `x_ref` from a correspondence, with its one-pixel
/// spread, as `(inverse depth, inverse-depth variance)`.
fn triangulated_measurement(
    world_from_ref: &Pose,
    world_from_cur: &Pose,
    x_ref: &Point2<f64>,
    x_cur: &Point2<f64>,
    k: &CameraIntrinsics,
    cfg: &OdometryConfig,
) -> Option<(f64, f64)> {
    let tri = triangulate_point(world_from_ref, world_from_cur, x_ref, x_cur, k, cfg.min_ray_angle).ok()?;
    let cur_from_ref = relative_pose(world_from_ref, world_from_cur);
    let ray = k.ray(x_ref);
    let p_ref = ray * tri.depth;
    let c_cur = cur_from_ref.inverse().origin().coords;
    let geometry = MomentGeometry {
        ref_ray: p_ref,
        cur_ray: p_ref - c_cur,
        translation: c_cur,
    };
    let m = measurement_moments(p_ref.norm(), &geometry, k.f).ok()?;
    let sigma = (m.sigma / ray.norm()).max(cfg.sigma_floor);
    let d = tri.depth;
    Some((1.0 / d, sigma * sigma / d.powi(4)))
}

fn usable_features(frame: &IntensityImage, feats: Vec<FeaturePoint>, margin: f64) -> Vec<FeaturePoint> {
    feats.into_iter().filter(|f| frame.contains(&f.pixel, margin)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        0.0
    } else {
        v[v.len() / 2]
    }
}

/// Two-view initialization between frame 0 and the first frame with enough
/// parallax. Returns the frame-0 keyframe with a metric map.
fn bootstrap(
    frames: &[IntensityImage],
    k: &CameraIntrinsics,
    provider: &dyn FeatureProvider,
    scale: ScaleReference,
    cfg: &OdometryConfig,
) -> Result<Keyframe> {
    let f0 = usable_features(&frames[0], provider.features(0)?, cfg.map_init.margin);
    if f0.is_empty() {
        return Err(Error::invalid("no features in the first frame").at_frame(0));
    }
    for (b, frame) in frames.iter().enumerate().skip(1) {
        let fb = usable_features(frame, provider.features(b)?, 0.0);
        let matches = match_features(&f0, &fb, cfg.match_ratio);
        if matches.len() < 8 {
            continue;
        }
        let flow = median(
            matches
                .iter()
                .map(|&(i, j)| (f0[i].pixel - fb[j].pixel).norm())
                .collect(),
        );
        if flow < cfg.min_bootstrap_flow {
            continue;
        }
        let a: Vec<Point2<f64>> = matches.iter().map(|&(i, _)| f0[i].pixel).collect();
        let c: Vec<Point2<f64>> = matches.iter().map(|&(_, j)| fb[j].pixel).collect();
        let geometry = match two_view_pose(k, &a, &c, cfg.min_ray_angle) {
            Ok(g) => g,
            Err(e) => {
                log::debug!("bootstrap with frame {b} failed: {e}");
                continue;
            }
        };
        // Scale from the reference.
        let pts: Vec<(usize, nalgebra::Point3<f64>)> = matches
            .iter()
            .zip(&geometry.depths)
            .filter_map(|(&(i, _), d)| d.map(|d| (i, k.backproject(&f0[i].pixel, d))))
            .collect();
        let s = match scale {
            ScaleReference::MeanDepth(m) => {
                m / (pts.iter().map(|(_, p)| p.z).sum::<f64>() / pts.len() as f64)
            }
            ScaleReference::CameraHeight(h) => {
                let samples: Vec<GroundSample> = pts
                    .iter()
                    .map(|(_, p)| GroundSample {
                        x: p.x,
                        y: p.y,
                        z_bar: p.z,
                    })
                    .collect();
                let n = fit_plane(&samples).map_err(|e| e.at_frame(b))?;
                let offset =
                    samples.iter().map(|p| n.dot(&p.point().coords)).sum::<f64>() / samples.len() as f64;
                h / offset
            }
        };
        if !(s > 0.0 && s.is_finite()) || !(scale.value() > 0.0) {
            return Err(Error::invalid("scale reference must be positive"));
        }
        let rel = geometry.cur_from_ref;
        let world_from_b = Pose::new(*rel.rotation(), rel.translation() * s).inverse();

        let mut map = initialize_depth_map(&frames[0], &f0, cfg.seed, &cfg.map_init)?;
        for (i, j) in matches {
            if let Some((rho, var)) =
                triangulated_measurement(&Pose::identity(), &world_from_b, &f0[i].pixel, &fb[j].pixel, k, cfg)
            {
                fuse_inverse(&mut map.entries[i], rho, var);
            }
        }
        log::debug!("initialized from frames 0 and {b} (scale {s:.4})");
        return Ok(Keyframe {
            world_from_camera: Pose::identity(),
            features: f0,
            map,
        });
    }
    Err(Error::degenerate("no frame with enough parallax to initialize").at_frame(0))
}

/// New keyframe at `index`: depths carried over from the previous keyframe
/// for matched features, refined by triangulation between the two keyframes.
fn reseed(
    prev: &Keyframe,
    image: &IntensityImage,
    index: usize,
    world_from_camera: Pose,
    k: &CameraIntrinsics,
    provider: &dyn FeatureProvider,
    cfg: &OdometryConfig,
) -> Result<Keyframe> {
    let feats = usable_features(image, provider.features(index)?, cfg.map_init.margin);
    if feats.is_empty() {
        return Err(Error::invalid("no features for the new keyframe"));
    }
    let mut map = initialize_depth_map(image, &feats, cfg.seed.wrapping_add(index as u64), &cfg.map_init)?;
    let new_from_old = relative_pose(&prev.world_from_camera, &world_from_camera);
    for (i, j) in match_features(&feats, &prev.features, cfg.match_ratio) {
        let old = &prev.map.entries[j];
        if old.inv_variance >= cfg.alignment.trust_threshold {
            continue;
        }
        let p_old = k.backproject(&old.pixel, 1.0 / old.inv_depth);
        let z_new = new_from_old.transform_point(&p_old).z;
        if !(z_new > 0.0) {
            continue;
        }
        let ratio = old.inv_depth * z_new; // z_old / z_new
        let entry = &mut map.entries[i];
        entry.inv_depth = 1.0 / z_new;
        entry.inv_variance = old.inv_variance * ratio.powi(4);
        if let Some((rho, var)) = triangulated_measurement(
            &world_from_camera,
            &prev.world_from_camera,
            &feats[i].pixel,
            &old.pixel,
            k,
            cfg,
        ) {
            fuse_inverse(entry, rho, var);
        }
    }
    Ok(Keyframe {
        world_from_camera,
        features: feats,
        map,
    })
}

/// `world_from_camera` pose of every frame; frame 0 is the world origin.
///
/// The map is initialized two-view from frame 0 and the first frame with
/// enough parallax, scaled by `scale`, and every frame is aligned directly
/// against the current keyframe map from a constant-velocity guess.
pub fn track_sequence(
    frames: &[IntensityImage],
    k: &CameraIntrinsics,
    provider: &dyn FeatureProvider,
    scale: ScaleReference,
    cfg: &OdometryConfig,
) -> Result<Vec<Pose>> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "odometry needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    if cfg.keyframe_interval == 0 {
        return Err(Error::invalid("keyframe interval must be at least 1"));
    }
    if frames.iter().all(|f| f == &frames[0]) {
        return Ok(vec![Pose::identity(); frames.len()]);
    }
    let mut kf = bootstrap(frames, k, provider, scale, cfg)?;
    let mut poses = vec![Pose::identity()];
    for (idx, frame) in frames.iter().enumerate().skip(1) {
        let n = poses.len();
        let predicted = if n >= 2 {
            let step = poses[n - 2].inverse() * poses[n - 1];
            poses[n - 1] * step
        } else {
            poses[n - 1]
        };
        let guess = relative_pose(&kf.world_from_camera, &predicted);
        let res = estimate_relative_pose(&kf.map, frame, k, &guess, &cfg.alignment)
            .map_err(|e| e.at_frame(idx))?;
        let world_from_cur = kf.world_from_camera * res.pose.inverse();
        poses.push(world_from_cur);
        if idx % cfg.keyframe_interval == 0 && idx + 1 < frames.len() {
            kf = reseed(&kf, frame, idx, world_from_cur, k, provider, cfg).map_err(|e| e.at_frame(idx))?;
        }
    }
    Ok(poses)
}
