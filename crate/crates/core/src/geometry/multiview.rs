use nalgebra::{Point2, Point3, Vector2};

use super::{warp, CameraIntrinsics, Pose};
use crate::error::{Error, Result};

/// Rays closer than this are treated as parallel.
pub const DEFAULT_MIN_RAY_ANGLE_DEG: f64 = 0.5;

const MIN_BASELINE: f64 = 1e-12;

/// Midpoint triangulation result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    /// Midpoint of the closest approach, world frame.
    pub point: Point3<f64>,
    /// z-depth of the point in the reference camera.
    pub depth: f64,
    /// Angle between the two viewing rays, radians.
    pub ray_angle: f64,
}

/// Midpoint triangulation of a correspondence between two cameras given as
/// `world_from_camera` poses.
pub fn triangulate_point(
    world_from_ref: &Pose,
    world_from_cur: &Pose,
    x_ref: &Point2<f64>,
    x_cur: &Point2<f64>,
    k: &CameraIntrinsics,
    min_ray_angle: f64,
) -> Result<Triangulation> {
    let c1 = world_from_ref.origin();
    let c2 = world_from_cur.origin();
    let baseline = c2 - c1;
    if baseline.norm() < MIN_BASELINE {
        return Err(Error::degenerate("zero baseline"));
    }
    let d1 = world_from_ref.transform_vector(&k.ray(x_ref));
    let d2 = world_from_cur.transform_vector(&k.ray(x_cur));
    let cos = d1.dot(&d2) / (d1.norm() * d2.norm());
    let ray_angle = cos.clamp(-1.0, 1.0).acos();
    if ray_angle < min_ray_angle {
        return Err(Error::degenerate(format!(
            "rays nearly parallel ({:.4} deg)",
            ray_angle.to_degrees()
        )));
    }
    // Closest points c1 + s d1 and c2 + t d2.
    let a = d1.dot(&d1);
    let b = d1.dot(&d2);
    let c = d2.dot(&d2);
    let e = d1.dot(&baseline);
    let g = d2.dot(&baseline);
    let denom = a * c - b * b;
    if denom.abs() < 1e-15 * a * c {
        return Err(Error::degenerate("rays parallel"));
    }
    let s = (c * e - b * g) / denom;
    let t = (b * e - a * g) / denom;
    if s <= 0.0 || t <= 0.0 {
        return Err(Error::degenerate("rays intersect behind a camera"));
    }
    let point = Point3::from(((c1.coords + d1 * s) + (c2.coords + d2 * t)) * 0.5);
    let depth = world_from_ref.inverse().transform_point(&point).z;
    if depth <= 0.0 {
        return Err(Error::degenerate("triangulated point behind reference camera"));
    }
    Ok(Triangulation {
        point,
        depth,
        ray_angle,
    })
}

/// z-depth of a correspondence in the reference camera.
pub fn triangulate(
    world_from_ref: &Pose,
    world_from_cur: &Pose,
    x_ref: &Point2<f64>,
    x_cur: &Point2<f64>,
    k: &CameraIntrinsics,
) -> Result<f64> {
    triangulate_point(
        world_from_ref,
        world_from_cur,
        x_ref,
        x_cur,
        k,
        DEFAULT_MIN_RAY_ANGLE_DEG.to_radians(),
    )
    .map(|t| t.depth)
}

/// Same as [`triangulate`] with the reference camera at the origin and the
/// current camera given by `cur_from_ref`.
pub fn triangulate_relative(
    cur_from_ref: &Pose,
    x_ref: &Point2<f64>,
    x_cur: &Point2<f64>,
    k: &CameraIntrinsics,
    min_ray_angle: f64,
) -> Result<Triangulation> {
    triangulate_point(
        &Pose::identity(),
        &cur_from_ref.inverse(),
        x_ref,
        x_cur,
        k,
        min_ray_angle,
    )
}

/// Image of a reference ray over a depth interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarSegment {
    /// Projection at the minimum depth.
    pub near: Point2<f64>,
    /// Projection at the maximum depth.
    pub far: Point2<f64>,
}

impl EpipolarSegment {
    pub fn length(&self) -> f64 {
        (self.far - self.near).norm()
    }

    /// Point at fraction `s` in `[0, 1]` from `near` to `far`.
    pub fn point_at(&self, s: f64) -> Point2<f64> {
        self.near + (self.far - self.near) * s
    }

    /// Euclidean distance from `p` to the closed segment.
    pub fn distance_to(&self, p: &Point2<f64>) -> f64 {
        let d: Vector2<f64> = self.far - self.near;
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return (p - self.near).norm();
        }
        let s = ((p - self.near).dot(&d) / len2).clamp(0.0, 1.0);
        (p - self.point_at(s)).norm()
    }
}

/// Projection of the reference ray through `x_ref` for depths in
/// `[d_min, d_max]` into the frame related by `cur_from_ref`.
pub fn epipolar_line(
    k: &CameraIntrinsics,
    cur_from_ref: &Pose,
    x_ref: &Point2<f64>,
    d_min: f64,
    d_max: f64,
) -> Result<EpipolarSegment> {
    if cur_from_ref.translation().norm() < MIN_BASELINE {
        return Err(Error::degenerate("zero baseline"));
    }
    if !(d_min > 0.0 && d_max > d_min && d_max.is_finite()) {
        return Err(Error::invalid(format!(
            "depth interval must satisfy 0 < d_min < d_max, got [{d_min}, {d_max}]"
        )));
    }
    let near = warp(x_ref, 1.0 / d_min, cur_from_ref, k)?;
    let far = warp(x_ref, 1.0 / d_max, cur_from_ref, k)?;
    Ok(EpipolarSegment { near, far })
}
