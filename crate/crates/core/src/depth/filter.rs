use nalgebra::{Point2, Vector3};

use crate::error::{Error, Result};

/// Gaussian depth belief of one pixel block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthHypothesis {
    /// Mean depth in meters.
    pub mu: f64,
    /// Depth variance in square meters.
    pub sigma2: f64,
    pub observation_count: u32,
}

impl DepthHypothesis {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("depth mean must be positive, got {mu}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "depth variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            mu,
            sigma2,
            observation_count: 0,
        })
    }

    /// From an inverse-depth mean and variance, using first-order propagation
    /// `var(1/x) = var(x) / x^4`.
    pub fn from_inverse(inv_mean: f64, inv_var: f64) -> Result<Self> {
        if !(inv_mean > 0.0) {
            return Err(Error::invalid("inverse depth must be positive"));
        }
        Self::new(1.0 / inv_mean, inv_var / inv_mean.powi(4))
    }

    /// `(mean, variance)` in inverse depth.
    pub fn to_inverse(&self) -> (f64, f64) {
        (1.0 / self.mu, self.sigma2 / self.mu.powi(4))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `sigma / mu`.
    pub fn relative_sigma(&self) -> f64 {
        self.sigma() / self.mu
    }
}

/// One accepted depth measurement from the epipolar search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthObservation {
    /// Triangulated z-depth in the reference frame, meters.
    pub depth: f64,
    pub frame: usize,
    /// Matched location in the current frame.
    pub pixel: Point2<f64>,
    pub ncc: f64,
}

/// Conjugate Gaussian update of `hyp` with a measurement `N(obs_mu, obs_sigma^2)`.
pub fn fuse(hyp: &DepthHypothesis, obs_mu: f64, obs_sigma: f64) -> Result<DepthHypothesis> {
    if !(obs_sigma > 0.0 && obs_sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "observation sigma must be positive, got {obs_sigma}"
        )));
    }
    if !obs_mu.is_finite() {
        return Err(Error::invalid("observation mean must be finite"));
    }
    let obs_var = obs_sigma * obs_sigma;
    let total = hyp.sigma2 + obs_var;
    let mu = (obs_var * hyp.mu + hyp.sigma2 * obs_mu) / total;
    let sigma2 = hyp.sigma2 * obs_var / total;
    Ok(DepthHypothesis {
        mu,
        sigma2,
        observation_count: hyp.observation_count + 1,
    })
}

/// Triangle formed by the reference center, current center and scene point,
/// expressed in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentGeometry {
    /// Direction from the reference center toward the point.
    pub ref_ray: Vector3<f64>,
    /// From the current center toward the point.
    pub cur_ray: Vector3<f64>,
    /// From the reference center to the current center.
    pub translation: Vector3<f64>,
}

/// Per-observation moments from the one-pixel law-of-sines perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementMoments {
    /// Mean distance along the reference ray.
    pub mu: f64,
    /// Absolute distance change for a one-pixel shift, before any floor.
    pub sigma: f64,
    /// Perturbed distance along the reference ray.
    pub perturbed_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

/// Mean and spread of a triangulated distance `d_prev_norm` under a one-pixel
/// rotation of the current ray.
///
/// `alpha` is the angle at the reference center, `beta` the angle at the
/// current center, `delta_beta = atan(1/f)` the angle of one pixel and
/// `gamma = pi - alpha - (beta + delta_beta)`. The law of sines gives the
/// perturbed norm `|t| sin(beta + delta_beta) / sin(gamma)`; the mean is the
/// average of both norms and the spread their absolute difference.
pub fn measurement_moments(
    d_prev_norm: f64,
    geometry: &MomentGeometry,
    focal: f64,
) -> Result<MeasurementMoments> {
    let t_norm = geometry.translation.norm();
    if !(t_norm > 0.0) {
        return Err(Error::degenerate("zero baseline"));
    }
    if !(d_prev_norm > 0.0) || !(focal > 0.0) {
        return Err(Error::invalid("distance and focal length must be positive"));
    }
    if geometry.ref_ray.norm() == 0.0 || geometry.cur_ray.norm() == 0.0 {
        return Err(Error::degenerate("zero-length ray"));
    }
    let alpha = angle_between(&geometry.ref_ray, &geometry.translation);
    let beta = angle_between(&geometry.cur_ray, &(-geometry.translation));
    let delta_beta = (1.0 / focal).atan();
    let gamma = std::f64::consts::PI - alpha - (beta + delta_beta);
    let sin_gamma = gamma.sin();
    if gamma <= 0.0 || sin_gamma < 1e-9 {
        return Err(Error::degenerate(format!(
            "triangle closes at gamma = {gamma:.3e} rad"
        )));
    }
    let perturbed_norm = t_norm * (beta + delta_beta).sin() / sin_gamma;
    Ok(MeasurementMoments {
        mu: 0.5 * (d_prev_norm + perturbed_norm),
        sigma: (perturbed_norm - d_prev_norm).abs(),
        perturbed_norm,
        alpha,
        beta,
        gamma,
    })
}
