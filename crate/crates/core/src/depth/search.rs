use nalgebra::{Point2, Vector3};

use super::ncc::{ncc_slices, NccMode};
use super::{DepthHypothesis, DepthObservation};
use crate::error::{Error, Result};
use crate::geometry::{triangulate_relative, CameraIntrinsics, Pose};
use crate::image::{IntensityImage, PixelBlock};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Largest spacing between samples along the segment, pixels.
    pub step: f64,
    pub ncc_threshold: f64,
    pub ncc_mode: NccMode,
    /// Interval half-width in standard deviations.
    pub sigma_span: f64,
    /// Smallest depth searched, meters.
    pub min_depth: f64,
    /// Minimum angle between triangulation rays, radians.
    pub min_ray_angle: f64,
    /// Profiles whose score range is below this are treated as textureless.
    pub flat_tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            step: 0.7,
            ncc_threshold: 0.85,
            ncc_mode: NccMode::Raw,
            sigma_span: 2.0,
            min_depth: 1e-2,
            min_ray_angle: crate::geometry::DEFAULT_MIN_RAY_ANGLE_DEG.to_radians(),
            flat_tolerance: 1e-6,
        }
    }
}

/// Searches the epipolar segment of `ref_block.center` over
/// `mu +- sigma_span * sigma` for the block with highest correlation and
/// triangulates it.
pub fn epipolar_search(
    hyp: &DepthHypothesis,
    ref_block: &PixelBlock,
    cur_frame: &IntensityImage,
    cur_from_ref: &Pose,
    k: &CameraIntrinsics,
    cfg: &SearchConfig,
) -> Result<DepthObservation> {
    let t = cur_from_ref.translation();
    if t.norm() < 1e-12 {
        return Err(Error::degenerate("zero baseline (pure rotation)"));
    }
    let x_ref = ref_block.center;
    let sigma = hyp.sigma();
    let d_min = (hyp.mu - cfg.sigma_span * sigma).max(cfg.min_depth);
    let d_max = hyp.mu + cfg.sigma_span * sigma;
    if d_max <= d_min {
        return Err(Error::invalid("empty depth interval"));
    }

    // Points on the reference ray map to R r + rho t (homogeneous) in the
    // current camera, for inverse depth rho.
    let r = k.ray(&x_ref);
    let rr = cur_from_ref.transform_vector(&r);
    let mut rho_lo = 1.0 / d_max;
    let mut rho_hi = 1.0 / d_min;
    let z_at = |rho: f64| rr.z + rho * t.z;
    const MIN_Z: f64 = 1e-6;
    if t.z.abs() < 1e-15 {
        if rr.z <= MIN_Z {
            return Err(Error::OutOfView);
        }
    } else {
        let rho_zero = (MIN_Z - rr.z) / t.z;
        if t.z > 0.0 {
            rho_lo = rho_lo.max(rho_zero);
        } else {
            rho_hi = rho_hi.min(rho_zero);
        }
    }
    if !(rho_hi > rho_lo) || z_at(rho_lo) <= 0.0 || z_at(rho_hi) <= 0.0 {
        return Err(Error::OutOfView);
    }
    let project = |rho: f64| -> Point2<f64> {
        let p: Vector3<f64> = rr + t * rho;
        Point2::new(k.f * p.x / p.z + k.cx, k.f * p.y / p.z + k.cy)
    };
    let far = project(rho_lo);
    let near = project(rho_hi);

    let margin = ref_block.half_size as f64 + 1.0;
    let (a, b) = clip_segment(
        far,
        near,
        margin,
        cur_frame.width() as f64 - 1.0 - margin,
        margin,
        cur_frame.height() as f64 - 1.0 - margin,
    )
    .ok_or(Error::OutOfView)?;

    let length = (b - a).norm();
    let n = ((length / cfg.step).ceil() as usize).max(1) + 1;
    let mut scores = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let p = a + (b - a) * (i as f64 / (n - 1) as f64);
        let score = match cur_frame.block(&p, ref_block.half_size) {
            Some(blk) => match ncc_slices(&ref_block.intensities, &blk.intensities, cfg.ncc_mode) {
                Ok(s) => s,
                Err(Error::UndefinedCorrelation) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            },
            None => f64::NEG_INFINITY,
        };
        scores.push(score);
        points.push(p);
    }
    let (best_idx, &best) = scores
        .iter()
        .enumerate()
        .fold((0usize, &f64::NEG_INFINITY), |acc, (i, s)| {
            if *s > *acc.1 {
                (i, s)
            } else {
                acc
            }
        });
    if !best.is_finite() {
        return Err(Error::LowCorrelation { score: -1.0 });
    }
    let worst = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::INFINITY, f64::min);
    if best < cfg.ncc_threshold || best - worst < cfg.flat_tolerance {
        return Err(Error::LowCorrelation { score: best });
    }

    // Parabolic refinement around the peak.
    let mut pixel = points[best_idx];
    if best_idx > 0 && best_idx + 1 < n {
        let (s0, s1, s2) = (scores[best_idx - 1], best, scores[best_idx + 1]);
        let denom = s0 - 2.0 * s1 + s2;
        if s0.is_finite() && s2.is_finite() && denom < 0.0 {
            let offset = (0.5 * (s0 - s2) / denom).clamp(-0.5, 0.5);
            let step = points[best_idx + 1] - points[best_idx];
            pixel += step * offset;
        }
    }

    let tri = triangulate_relative(cur_from_ref, &x_ref, &pixel, k, cfg.min_ray_angle)?;
    Ok(DepthObservation {
        depth: tri.depth,
        frame: 0,
        pixel,
        ncc: best,
    })
}

/// Liang-Barsky clipping of segment `p0 -> p1` to an axis-aligned box.
fn clip_segment(
    p0: Point2<f64>,
    p1: Point2<f64>,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
) -> Option<(Point2<f64>, Point2<f64>)> {
    if xmax < xmin || ymax < ymin {
        return None;
    }
    let d = p1 - p0;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d.x, p0.x - xmin),
        (d.x, xmax - p0.x),
        (-d.y, p0.y - ymin),
        (d.y, ymax - p0.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some((p0 + d * t0, p0 + d * t1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_inside_and_outside() {
        let (a, b) = clip_segment(
            Point2::new(-10.0, 5.0),
            Point2::new(30.0, 5.0),
            0.0,
            20.0,
            0.0,
            10.0,
        )
        .unwrap();
        assert_eq!(a, Point2::new(0.0, 5.0));
        assert_eq!(b, Point2::new(20.0, 5.0));
        assert!(clip_segment(
            Point2::new(-10.0, -5.0),
            Point2::new(-1.0, -1.0),
            0.0,
            20.0,
            0.0,
            10.0
        )
        .is_none());
    }
}
