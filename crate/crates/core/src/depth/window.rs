use nalgebra::Point2;
use rayon::prelude::*;

use super::{
    densify, epipolar_search, fuse, measurement_moments, DenseDepthMap, DensifyConfig,
    DepthHypothesis, MomentGeometry, SearchConfig,
};
use crate::alignment::SparseDepthMap;
use crate::error::{Error, Result};
use crate::geometry::{relative_pose, CameraIntrinsics, Pose};
use crate::image::IntensityImage;

/// A frame of the sliding window with its `world_from_camera` pose.
#[derive(Debug, Clone, Copy)]
pub struct WindowFrame<'a> {
    pub index: usize,
    pub image: &'a IntensityImage,
    pub world_from_camera: Pose,
}

/// Which distance a triangulated observation contributes as its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObservationMean {
    /// The triangulated distance itself.
    #[default]
    Triangulated,
    /// The midpoint of the triangulated and the one-pixel-perturbed distance
    /// (`MeasurementMoments::mu`). The perturbed distance is always the
    /// larger one, so this biases every observation by `+sigma/2`.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthFilterConfig {
    pub search: SearchConfig,
    /// Half-size of the correlation block.
    pub block_half_size: usize,
    /// Lower bound on a per-observation standard deviation, meters.
    pub sigma_floor: f64,
    /// `sigma / mu` below which a hypothesis counts as converged.
    pub convergence_ratio: f64,
    pub observation_mean: ObservationMean,
    pub densify: DensifyConfig,
}

impl Default for DepthFilterConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            block_half_size: 3,
            sigma_floor: 1e-4,
            convergence_ratio: 0.02,
            observation_mean: ObservationMean::default(),
            densify: DensifyConfig::default(),
        }
    }
}

/// Final state of one seed after the window.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedState {
    pub pixel: Point2<f64>,
    pub hypothesis: DepthHypothesis,
    pub converged: bool,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct DepthWindowOutput {
    pub seeds: Vec<SeedState>,
    pub dense: DenseDepthMap,
    /// Set when fewer than three seeds converged and no densification ran.
    pub densify_skipped: bool,
}

impl DepthWindowOutput {
    pub fn converged(&self) -> impl Iterator<Item = &SeedState> {
        self.seeds.iter().filter(|s| s.converged)
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.seeds.is_empty() {
            return 0.0;
        }
        self.converged().count() as f64 / self.seeds.len() as f64
    }
}

/// Refines one hypothesis against every non-reference frame of the window.
fn refine_seed(
    pixel: Point2<f64>,
    mut hyp: DepthHypothesis,
    reference: &IntensityImage,
    frames: &[WindowFrame<'_>],
    k: &CameraIntrinsics,
    cfg: &DepthFilterConfig,
) -> SeedState {
    let mut accepted = 0;
    let mut rejected = 0;
    let ref_block = reference.block(&pixel, cfg.block_half_size);
    let ray = k.ray(&pixel);
    let ray_norm = ray.norm();
    if let Some(ref_block) = ref_block {
        let world_from_ref = frames[0].world_from_camera;
        for frame in &frames[1..] {
            let cur_from_ref = relative_pose(&world_from_ref, &frame.world_from_camera);
            let update = epipolar_search(&hyp, &ref_block, frame.image, &cur_from_ref, k, &cfg.search)
                .and_then(|obs| {
                    let p_ref = ray * obs.depth;
                    let c_cur = cur_from_ref.inverse().origin().coords;
                    let geometry = MomentGeometry {
                        ref_ray: p_ref,
                        cur_ray: p_ref - c_cur,
                        translation: c_cur,
                    };
                    let m = measurement_moments(p_ref.norm(), &geometry, k.f)?;
                    // Distances along the ray back to z-depth.
                    let mu = match cfg.observation_mean {
                        ObservationMean::Triangulated => obs.depth,
                        ObservationMean::Midpoint => m.mu / ray_norm,
                    };
                    let sigma = (m.sigma / ray_norm).max(cfg.sigma_floor);
                    fuse(&hyp, mu, sigma)
                });
            match update {
                Ok(h) => {
                    hyp = h;
                    accepted += 1;
                }
                Err(e) => {
                    log::trace!("seed {pixel:?} frame {}: {e}", frame.index);
                    rejected += 1;
                }
            }
        }
    } else {
        rejected = frames.len() - 1;
    }
    SeedState {
        pixel,
        hypothesis: hyp,
        converged: accepted > 0 && hyp.relative_sigma() < cfg.convergence_ratio,
        accepted,
        rejected,
    }
}

/// Runs the depth filter over a sliding window whose first frame holds the
/// seeds, then densifies the converged ones.
pub fn run_depth_window(
    frames: &[WindowFrame<'_>],
    seeds: &SparseDepthMap,
    k: &CameraIntrinsics,
    cfg: &DepthFilterConfig,
) -> Result<DepthWindowOutput> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "depth window needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let states: Vec<SeedState> = seeds
        .entries
        .par_iter()
        .map(|entry| -> Result<SeedState> {
            let hyp = entry.hypothesis()?;
            Ok(refine_seed(entry.pixel, hyp, &seeds.reference, frames, k, cfg))
        })
        .collect::<Result<_>>()?;

    let converged: Vec<(Point2<f64>, DepthHypothesis)> = states
        .iter()
        .filter(|s| s.converged)
        .map(|s| (s.pixel, s.hypothesis))
        .collect();
    let (dense, densify_skipped) = match densify(&converged, frames, k, &cfg.densify) {
        Ok(map) => (map, false),
        Err(Error::InsufficientSeeds { .. }) => {
            let mut map = DenseDepthMap::unknown(seeds.reference.width(), seeds.reference.height());
            for (p, h) in &converged {
                let (x, y) = (p.x.round() as usize, p.y.round() as usize);
                if x < map.width() && y < map.height() {
                    map.set(x, y, h.mu, h.sigma2);
                }
            }
            (map, true)
        }
        Err(e) => return Err(e),
    };
    Ok(DepthWindowOutput {
        seeds: states,
        dense,
        densify_skipped,
    })
}
