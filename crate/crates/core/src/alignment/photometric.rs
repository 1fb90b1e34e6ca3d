use nalgebra::{Matrix6, Point2, Point3, Vector2, Vector3, Vector6};

use super::{MapEntry, SparseDepthMap};
use crate::error::{Error, Result};
use crate::geometry::{huber_norm, huber_weight, CameraIntrinsics, Pose};
use crate::image::IntensityImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentConfig {
    /// Side of the square block compared around each map entry, pixels.
    pub block_size: usize,
    pub huber_delta: f64,
    /// Entries with inverse-depth variance at or above this are ignored.
    pub trust_threshold: f64,
    pub min_entries: usize,
    pub initial_damping: f64,
    /// Damping beyond which the optimizer gives up.
    pub max_damping: f64,
    pub max_iterations: usize,
    /// Update norm below which the optimizer stops.
    pub tolerance: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            huber_delta: 0.1,
            trust_threshold: 1.0,
            min_entries: 6,
            initial_damping: 1e-3,
            max_damping: 1e10,
            max_iterations: 50,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    /// Estimated `cur_from_ref`.
    pub pose: Pose,
    pub cost: f64,
    pub iterations: usize,
    /// Map entries that contributed.
    pub entries_used: usize,
}

/// Offsets of the block around an entry, symmetric about the entry pixel.
fn block_offsets(size: usize) -> Vec<Vector2<f64>> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(size * size);
    for j in 0..size {
        for i in 0..size {
            out.push(Vector2::new(i as f64 - c, j as f64 - c));
        }
    }
    out
}

/// One block pixel: its reference-frame 3D point and reference intensity.
#[derive(Debug, Clone, Copy)]
struct Sample {
    entry: usize,
    point: Point3<f64>,
    intensity: f64,
}

/// Photometric error of a map against a new frame.
pub struct PhotometricProblem<'a> {
    samples: Vec<Sample>,
    entries: usize,
    frame: &'a IntensityImage,
    k: &'a CameraIntrinsics,
    delta: f64,
}

impl<'a> PhotometricProblem<'a> {
    /// Collects the block samples of trusted entries. Block pixels share the
    /// entry's inverse depth (fronto-parallel patch).
    pub fn new(
        map: &SparseDepthMap,
        frame: &'a IntensityImage,
        k: &'a CameraIntrinsics,
        cfg: &AlignmentConfig,
    ) -> Result<Self> {
        let offsets = block_offsets(cfg.block_size);
        let trusted: Vec<&MapEntry> = map.trusted(cfg.trust_threshold).collect();
        let mut samples = Vec::new();
        let mut entries = 0;
        for e in &trusted {
            let block: Option<Vec<Sample>> = offsets
                .iter()
                .map(|o| {
                    let px = e.pixel + o;
                    let intensity = map.reference.sample(&px)?;
                    Some(Sample {
                        entry: entries,
                        point: k.backproject(&px, 1.0 / e.inv_depth),
                        intensity,
                    })
                })
                .collect();
            if let Some(block) = block {
                samples.extend(block);
                entries += 1;
            }
        }
        Ok(Self {
            samples,
            entries,
            frame,
            k,
            delta: cfg.huber_delta,
        })
    }

    pub fn entry_count(&self) -> usize {
        self.entries
    }

    fn project(&self, p: &Point3<f64>) -> Option<Point2<f64>> {
        (p.z > 0.0).then(|| Point2::new(self.k.f * p.x / p.z + self.k.cx, self.k.f * p.y / p.z + self.k.cy))
    }

    /// Per-sample residuals `I(warp) - I_ref`, `None` where the warp leaves
    /// the frame.
    pub fn residuals(&self, cur_from_ref: &Pose) -> Vec<Option<f64>> {
        self.samples
            .iter()
            .map(|s| {
                let q = self.project(&cur_from_ref.transform_point(&s.point))?;
                Some(self.frame.sample(&q)? - s.intensity)
            })
            .collect()
    }

    /// Entries whose whole block lands inside the frame.
    fn visible_entries(&self, residuals: &[Option<f64>]) -> Vec<bool> {
        let mut ok = vec![true; self.entries];
        for (s, r) in self.samples.iter().zip(residuals) {
            if r.is_none() {
                ok[s.entry] = false;
            }
        }
        ok
    }

    /// Robust cost over the entries in `active`. Block pixels of an active
    /// entry that leave the frame are charged the largest possible residual
    /// so dropping out of view never lowers the cost.
    pub fn cost(&self, cur_from_ref: &Pose, active: &[bool]) -> f64 {
        let penalty = huber_norm(1.0, self.delta);
        self.samples
            .iter()
            .zip(self.residuals(cur_from_ref))
            .filter(|(s, _)| active[s.entry])
            .map(|(_, r)| r.map_or(penalty, |r| huber_norm(r, self.delta)))
            .sum()
    }

    /// Analytic Jacobians of each residual with respect to a left twist
    /// `(v, w)` applied to `cur_from_ref`.
    pub fn jacobians(&self, cur_from_ref: &Pose) -> Vec<Option<(f64, Vector6<f64>)>> {
        let k = self.k;
        self.samples
            .iter()
            .map(|s| {
                let q = cur_from_ref.transform_point(&s.point);
                let px = self.project(&q)?;
                let (value, grad) = self.frame.sample_with_gradient(&px)?;
                let iz = 1.0 / q.z;
                let (x, y) = (q.x * iz, q.y * iz);
                // d pixel / d q
                let dpi = nalgebra::Matrix2x3::new(
                    k.f * iz,
                    0.0,
                    -k.f * x * iz,
                    0.0,
                    k.f * iz,
                    -k.f * y * iz,
                );
                let gq: Vector3<f64> = dpi.transpose() * grad;
                // d q / d(v, w) = [I | -[q]x]  =>  row = [gq, q x gq]
                let gw = q.coords.cross(&gq);
                let j = Vector6::new(gq.x, gq.y, gq.z, gw.x, gw.y, gw.z);
                Some((value - s.intensity, j))
            })
            .collect()
    }
}

/// Estimates `cur_from_ref` minimizing the robust photometric error of the
/// map's trusted entries, by Levenberg-Marquardt on a left-multiplicative
/// twist with Huber IRLS weights.
pub fn estimate_relative_pose(
    map: &SparseDepthMap,
    frame: &IntensityImage,
    k: &CameraIntrinsics,
    initial: &Pose,
    cfg: &AlignmentConfig,
) -> Result<AlignmentResult> {
    let problem = PhotometricProblem::new(map, frame, k, cfg)?;
    let trusted = problem.entry_count();
    if trusted < cfg.min_entries {
        return Err(Error::InsufficientConstraints {
            available: trusted,
            required: cfg.min_entries,
        });
    }
    let active = problem.visible_entries(&problem.residuals(initial));
    let used = active.iter().filter(|a| **a).count();
    if used < cfg.min_entries {
        return Err(Error::InsufficientConstraints {
            available: used,
            required: cfg.min_entries,
        });
    }

    let mut pose = *initial;
    let mut cost = problem.cost(&pose, &active);
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;
    while iterations < cfg.max_iterations && cost > 0.0 {
        iterations += 1;
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for (s, jr) in problem.samples.iter().zip(problem.jacobians(&pose)) {
            let Some((r, j)) = jr else { continue };
            if !active[s.entry] {
                continue;
            }
            let w = huber_weight(r, cfg.huber_delta);
            h += w * j * j.transpose();
            g += w * r * j;
        }
        loop {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let delta = damped
                .cholesky()
                .map(|c| -c.solve(&g))
                .filter(|d| d.iter().all(|v| v.is_finite()));
            if let Some(delta) = delta {
                if delta.norm() < cfg.tolerance {
                    return Ok(AlignmentResult {
                        pose,
                        cost,
                        iterations,
                        entries_used: used,
                    });
                }
                let candidate = pose.perturbed(&delta);
                let new_cost = problem.cost(&candidate, &active);
                if new_cost < cost {
                    pose = candidate;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > cfg.max_damping {
                return Err(Error::NonConvergence {
                    best: Box::new(pose),
                    cost,
                    iterations,
                });
            }
        }
    }
    Ok(AlignmentResult {
        pose,
        cost,
        iterations,
        entries_used: used,
    })
}
