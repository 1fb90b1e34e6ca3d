//! Ground plane from depth beneath detected objects, and metric
//! back-projection of footpoints through that plane.

use nalgebra::{Matrix3, Point2, Point3, Vector3};

use crate::depth::DenseDepthMap;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::tracker::Detection;

/// Plane `n . p = h_cam` in the camera frame.
///
/// The normal points from the camera toward the ground, so `h_cam > 0` is the
/// camera's height above it. For a camera without roll,
/// `n = (0, cos theta, -sin theta)`, i.e. `h_cam = y cos theta - z sin theta`
/// on the plane; a camera pitched down by `phi` has `theta = -phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub n: Vector3<f64>,
    pub h_cam: f64,
    pub theta: f64,
}

impl GroundPlane {
    pub fn new(n: Vector3<f64>, h_cam: f64) -> Result<Self> {
        let norm = n.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("plane normal must be non-zero"));
        }
        if !(h_cam > 0.0 && h_cam.is_finite()) {
            return Err(Error::invalid(format!("camera height must be positive, got {h_cam}")));
        }
        let n = n / norm;
        Ok(Self {
            n,
            h_cam,
            theta: (-n.z).atan2(n.y),
        })
    }

    /// The flat-ground assumption: the image y axis is vertical.
    pub fn flat(h_cam: f64) -> Result<Self> {
        Self::new(Vector3::new(0.0, 1.0, 0.0), h_cam)
    }

    /// Level ground seen from a camera pitched down by `pitch` radians.
    pub fn from_pitch(pitch: f64, h_cam: f64) -> Result<Self> {
        Self::new(Vector3::new(0.0, pitch.cos(), pitch.sin()), h_cam)
    }

    /// Signed distance of a camera-frame point from the plane (positive
    /// below it).
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.n.dot(&p.coords) - self.h_cam
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.n, self.h_cam * s)
    }

    /// Same plane expressed in another camera, given `cur_from_ref`.
    pub fn transformed(&self, cur_from_ref: &Pose) -> Result<Self> {
        let n = cur_from_ref.transform_vector(&self.n);
        let h = self.h_cam + n.dot(cur_from_ref.translation());
        Self::new(n, h)
    }
}

/// Depth sample `(x, y, z_bar)` in camera coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundSample {
    pub x: f64,
    pub y: f64,
    pub z_bar: f64,
}

impl GroundSample {
    pub fn point(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z_bar)
    }
}

pub const DEFAULT_PATCH_FRACTION: f64 = 1.0 / 3.0;

/// Pixel rectangle `[x0, x1) x [y0, y1)` of the ground patch under a box:
/// full box width, `frac * h` tall, centered on the bottom edge.
pub fn patch_rect(det: &Detection, frac: f64) -> (i64, i64, i64, i64) {
    let b = &det.bbox;
    let ph = b.h * frac;
    let bottom = b.y + b.h;
    let x0 = b.x.round() as i64;
    let x1 = (b.x + b.w).round() as i64;
    let y0 = (bottom - ph / 2.0).round() as i64;
    let y1 = (bottom + ph / 2.0).round() as i64;
    (x0, x1, y0, y1)
}

/// Camera-frame samples from the known depths inside the ground patch of a
/// detection.
pub fn patch_samples(
    det: &Detection,
    depth: &DenseDepthMap,
    k: &CameraIntrinsics,
    frac: f64,
) -> Result<Vec<GroundSample>> {
    if !(frac > 0.0) {
        return Err(Error::invalid("patch fraction must be positive"));
    }
    let (x0, x1, y0, y1) = patch_rect(det, frac);
    let mut out = Vec::new();
    for y in y0.max(0)..y1.min(depth.height() as i64) {
        for x in x0.max(0)..x1.min(depth.width() as i64) {
            if let Some(z) = depth.depth(x as usize, y as usize) {
                let p = k.backproject(&Point2::new(x as f64, y as f64), z);
                out.push(GroundSample {
                    x: p.x,
                    y: p.y,
                    z_bar: p.z,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoSupport);
    }
    Ok(out)
}

fn centered(samples: &[GroundSample]) -> Result<(Vec<Vector3<f64>>, Vector3<f64>)> {
    if samples.len() < 3 {
        return Err(Error::DegenerateSamples(format!(
            "{} samples, need at least 3",
            samples.len()
        )));
    }
    let pts: Vec<Vector3<f64>> = samples.iter().map(|s| s.point().coords).collect();
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    Ok((pts.iter().map(|p| p - c).collect(), c))
}

/// Cramer's-rule plane fit with coordinate `dep` as the dependent variable
/// and the other two (`a`, `b`, in cyclic order) as regressors. Returns the
/// unnormalized normal.
fn cramer(pts: &[Vector3<f64>], dep: usize) -> Vector3<f64> {
    let (ia, ib) = ((dep + 1) % 3, (dep + 2) % 3);
    let (mut saa, mut sbb, mut sab, mut sad, mut sbd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let (a, b, d) = (p[ia], p[ib], p[dep]);
        saa += a * a;
        sbb += b * b;
        sab += a * b;
        sad += a * d;
        sbd += b * d;
    }
    let mut n = Vector3::zeros();
    n[ia] = sbd * sab - sad * sbb;
    n[ib] = sab * sad - saa * sbd;
    n[dep] = saa * sbb - sab * sab;
    n
}

fn orient_and_check(n: Vector3<f64>, pts: &[Vector3<f64>], centroid: &Vector3<f64>) -> Result<Vector3<f64>> {
    let scale: f64 = pts.iter().map(|p| p.norm_squared()).sum::<f64>();
    // n components scale with the square of the sample spread.
    if !(n.norm() > 1e-12 * scale * scale) || !n.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateSamples("samples are collinear or coincident".into()));
    }
    let n = n.normalize();
    Ok(if n.dot(centroid) < 0.0 { -n } else { n })
}

/// Unit plane normal from centered samples by Cramer's rule on
/// `z_bar = a x + b y + c`, oriented from the camera toward the samples.
pub fn fit_plane_cramer(samples: &[GroundSample]) -> Result<Vector3<f64>> {
    let (pts, c) = centered(samples)?;
    orient_and_check(cramer(&pts, 2), &pts, &c)
}

/// Cramer's-rule fit with the dependent coordinate chosen per data set: the
/// three regressions are computed and the one with the smallest orthogonal
/// residual wins. Unlike [`fit_plane_cramer`] this stays
/// well-conditioned when the plane contains the optical axis (zero pitch).
pub fn fit_plane(samples: &[GroundSample]) -> Result<Vector3<f64>> {
    let (pts, c) = centered(samples)?;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for dep in 0..3 {
        let n = cramer(&pts, dep);
        let norm = n.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            continue;
        }
        let u = n / norm;
        let residual: f64 = pts.iter().map(|p| u.dot(p).powi(2)).sum();
        if best.is_none_or(|(r, _)| residual < r) {
            best = Some((residual, n));
        }
    }
    let (_, n) = best.ok_or_else(|| Error::DegenerateSamples("samples are collinear".into()))?;
    orient_and_check(n, &pts, &c)
}

/// Result of [`estimate_ground`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundEstimate {
    pub plane: GroundPlane,
    /// Factor applied to depths so that the plane height matches the
    /// reference height (1 without a reference).
    pub depth_scale: f64,
    pub samples: usize,
}

/// Pools ground-patch samples over all detections of a frame, fits the plane
/// and derives the camera height as the mean plane offset. With `h_ref`,
/// depth and height are rescaled so `h_cam = h_ref`.
pub fn estimate_ground(
    dets: &[Detection],
    depth: &DenseDepthMap,
    k: &CameraIntrinsics,
    h_ref: Option<f64>,
    frac: f64,
) -> Result<GroundEstimate> {
    let mut samples = Vec::new();
    for d in dets {
        match patch_samples(d, depth, k, frac) {
            Ok(s) => samples.extend(s),
            Err(Error::NoSupport) => {}
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(Error::NoSupport);
    }
    let n = fit_plane(&samples)?;
    let h = samples.iter().map(|s| n.dot(&s.point().coords)).sum::<f64>() / samples.len() as f64;
    if !(h > 0.0) {
        return Err(Error::DegenerateSamples(format!("plane passes through the camera (h = {h})")));
    }
    let mut plane = GroundPlane::new(n, h)?;
    let mut depth_scale = 1.0;
    if let Some(h_ref) = h_ref {
        if !(h_ref > 0.0) {
            return Err(Error::invalid("reference height must be positive"));
        }
        depth_scale = h_ref / h;
        plane = plane.scaled(depth_scale)?;
    }
    Ok(GroundEstimate {
        plane,
        depth_scale,
        samples: samples.len(),
    })
}

/// Intersects the ray through pixel `b` with the plane:
/// `c = h K^-1 b / (n^T K^-1 b)`.
pub fn backproject_footpoint(
    b: &Point2<f64>,
    plane: &GroundPlane,
    k: &CameraIntrinsics,
) -> Result<Point3<f64>> {
    let ray = k.ray(b);
    let denominator = plane.n.dot(&ray);
    if !(denominator > 0.0) {
        return Err(Error::HorizonOrAbove { denominator });
    }
    Ok(Point3::from(ray * (plane.h_cam / denominator)))
}

/// Euclidean distance from the camera center.
pub fn object_distance(c: &Point3<f64>) -> f64 {
    c.coords.norm()
}

/// Homography mapping reference pixels on the plane into the current view:
/// `K (R + t n^T / h) K^-1` for `cur_from_ref = (R, t)`.
pub fn plane_homography(cur_from_ref: &Pose, plane: &GroundPlane, k: &CameraIntrinsics) -> Matrix3<f64> {
    let m = cur_from_ref.rotation_matrix() + cur_from_ref.translation() * plane.n.transpose() / plane.h_cam;
    k.matrix() * m * k.inverse_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::BBox;

    fn s(x: f64, y: f64, z: f64) -> GroundSample {
        GroundSample { x, y, z_bar: z }
    }

    #[test]
    fn patch_geometry_under_box() {
        let det = Detection::new(0, BBox::new(100.0, 50.0, 30.0, 90.0).unwrap(), 1.0, 0).unwrap();
        assert_eq!(patch_rect(&det, DEFAULT_PATCH_FRACTION), (100, 130, 125, 155));
    }

    #[test]
    fn constant_depth_gives_optical_axis_normal() {
        let samples = [s(-1.0, -1.0, 3.0), s(1.0, -1.0, 3.0), s(-1.0, 1.0, 3.0), s(1.0, 1.0, 3.0)];
        let n = fit_plane_cramer(&samples).unwrap();
        assert!((n - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn collinear_samples_are_degenerate() {
        let samples = [s(0.0, 0.0, 1.0), s(1.0, 1.0, 2.0), s(2.0, 2.0, 3.0)];
        assert!(matches!(fit_plane_cramer(&samples), Err(Error::DegenerateSamples(_))));
        assert!(matches!(fit_plane(&samples), Err(Error::DegenerateSamples(_))));
    }

    #[test]
    fn horizontal_optical_axis_needs_adaptive_fit() {
        // Ground 2 m below a level camera: y is constant, z_bar is not a
        // function of (x, y).
        let samples: Vec<_> = (0..20).map(|i| s((i % 5) as f64 - 2.0, 2.0, 4.0 + (i / 5) as f64)).collect();
        assert!(fit_plane_cramer(&samples).is_err());
        let n = fit_plane(&samples).unwrap();
        assert!((n - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn footpoint_unit_geometry() {
        let k = CameraIntrinsics::new(1.0, 0.0, 0.0, 2, 2).unwrap();
        let plane = GroundPlane::flat(1.0).unwrap();
        let c = backproject_footpoint(&Point2::new(0.0, 1.0), &plane, &k).unwrap();
        assert_eq!(c, Point3::new(0.0, 1.0, 1.0));
        assert!(matches!(
            backproject_footpoint(&Point2::new(0.0, 0.0), &plane, &k),
            Err(Error::HorizonOrAbove { .. })
        ));
    }

    #[test]
    fn distance() {
        assert_eq!(object_distance(&Point3::origin()), 0.0);
        assert_eq!(object_distance(&Point3::new(3.0, 4.0, 0.0)), 5.0);
    }

    #[test]
    fn pitch_relation() {
        let plane = GroundPlane::from_pitch(15f64.to_radians(), 10.0).unwrap();
        assert!((plane.theta + 15f64.to_radians()).abs() < 1e-15);
        let k = CameraIntrinsics::new(320.0, 320.0, 240.0, 640, 480).unwrap();
        let c = backproject_footpoint(&Point2::new(400.0, 300.0), &plane, &k).unwrap();
        let lhs = c.y * plane.theta.cos() - c.z * plane.theta.sin();
        assert!((lhs - 10.0).abs() < 1e-9);
    }

    #[test]
    fn homography_maps_ground_pixels() {
        let k = CameraIntrinsics::new(300.0, 160.0, 120.0, 320, 240).unwrap();
        let plane = GroundPlane::from_pitch(0.4, 5.0).unwrap();
        let rel = Pose::new(
            nalgebra::Rotation3::from_euler_angles(0.01, 0.02, -0.01),
            Vector3::new(0.3, -0.1, 0.2),
        );
        let px = Point2::new(100.0, 200.0);
        let c = backproject_footpoint(&px, &plane, &k).unwrap();
        let expect = k.project_camera(&rel.transform_point(&c)).unwrap();
        let h = plane_homography(&rel, &plane, &k) * Vector3::new(px.x, px.y, 1.0);
        assert!((Point2::new(h.x / h.z, h.y / h.z) - expect).norm() < 1e-9);
        // Plane transfer agrees with the point transfer.
        let moved = plane.transformed(&rel).unwrap();
        assert!(moved.signed_distance(&rel.transform_point(&c)).abs() < 1e-9);
    }
}
