use std::ops::Mul;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3, Vector6};

use crate::error::{Error, Result};

/// Rigid transform `p_target = R * p_source + t`.
///
/// Poses are named after the frames they connect, e.g. a `world_from_camera`
/// pose maps camera-frame points into the world frame. The relative pose of a
/// new frame with respect to a reference frame is `cur_from_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Rotation3::identity(), translation)
    }

    /// Builds a pose from a raw 3x3 matrix, rejecting anything that is not a
    /// proper rotation within `1e-6`.
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho > 1e-6 || rotation.determinant() < 0.0 {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (|R^T R - I| = {ortho:.3e}, det = {:.6})",
                rotation.determinant()
            )));
        }
        // Snap to the closest rotation so downstream algebra stays exact.
        let rot = Rotation3::from_matrix_eps(rotation, 1e-15, 100, Rotation3::identity());
        Ok(Self::new(rot, translation))
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rinv = self.rotation.inverse();
        Self::new(rinv, -(rinv * self.translation))
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Exponential-style increment: rotation by the axis-angle `w`, then
    /// translation by `v`, for a twist laid out as `(v, w)`.
    pub fn exp(twist: &Vector6<f64>) -> Self {
        let v = Vector3::new(twist[0], twist[1], twist[2]);
        let w = Vector3::new(twist[3], twist[4], twist[5]);
        Self::new(Rotation3::new(w), v)
    }

    /// `exp(delta) * self`, the left-multiplicative update used by the optimizer.
    pub fn perturbed(&self, delta: &Vector6<f64>) -> Self {
        Self::exp(delta) * *self
    }

    /// Origin of the source frame expressed in the target frame.
    pub fn origin(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    /// Rotation angle of the relative rotation between two poses, radians.
    /// Uses `atan2(sin, cos)`, which stays accurate near zero where the
    /// trace-based `acos` loses half the digits.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let r = (self.rotation.inverse() * other.rotation).into_inner();
        let sin = (r - r.transpose()).norm() / (2.0 * std::f64::consts::SQRT_2);
        let cos = (r.trace() - 1.0) / 2.0;
        sin.atan2(cos)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.matrix().iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

/// Relative pose `cur_from_ref` between two `world_from_camera` poses.
pub fn relative_pose(world_from_ref: &Pose, world_from_cur: &Pose) -> Pose {
    world_from_cur.inverse() * *world_from_ref
}
