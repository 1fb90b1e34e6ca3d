use nalgebra::{Matrix3, Point2, Point3, Vector3};

use super::Pose;
use crate::error::{Error, Result};

/// How the focal length is derived from a horizontal field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FocalModel {
    /// `f = (w/2) / tan(hfov/2)`, the pinhole relation.
    #[default]
    Geometric,
    /// `f = (w/2) * atan((hfov/180) * (pi/2))`, kept for reproducing published
    /// numbers. It does not reproduce the requested field of view.
    Literal,
}

/// Pinhole intrinsics. Camera frame is x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::invalid(format!("focal length must be positive, got {f}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(Self {
            f,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.cx, 0.0, self.f, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let fi = 1.0 / self.f;
        Matrix3::new(
            fi,
            0.0,
            -self.cx * fi,
            0.0,
            fi,
            -self.cy * fi,
            0.0,
            0.0,
            1.0,
        )
    }

    /// `K^-1 (u, v, 1)`: the viewing ray scaled to unit z.
    pub fn ray(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.f,
            (pixel.y - self.cy) / self.f,
            1.0,
        )
    }

    /// Camera-frame point at z-depth `depth` along the ray through `pixel`.
    pub fn backproject(&self, pixel: &Point2<f64>, depth: f64) -> Point3<f64> {
        Point3::from(self.ray(pixel) * depth)
    }

    /// Projects a camera-frame point.
    pub fn project_camera(&self, p: &Point3<f64>) -> Result<Point2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(Point2::new(
            self.f * p.x / p.z + self.cx,
            self.f * p.y / p.z + self.cy,
        ))
    }

    pub fn contains(&self, pixel: &Point2<f64>, margin: f64) -> bool {
        pixel.x >= margin
            && pixel.y >= margin
            && pixel.x <= self.width as f64 - 1.0 - margin
            && pixel.y <= self.height as f64 - 1.0 - margin
    }

    /// Angle subtended by one pixel at the principal point.
    pub fn pixel_angle(&self) -> f64 {
        (1.0 / self.f).atan()
    }
}

/// Intrinsics from image size and horizontal field of view in degrees, with
/// the principal point at the image center.
pub fn approximate_intrinsics(
    width: usize,
    height: usize,
    hfov_deg: f64,
    model: FocalModel,
) -> Result<CameraIntrinsics> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
        return Err(Error::invalid(format!(
            "horizontal field of view must lie in (0, 180) degrees, got {hfov_deg}"
        )));
    }
    let half_w = width as f64 / 2.0;
    let f = match model {
        FocalModel::Geometric => half_w / (hfov_deg.to_radians() / 2.0).tan(),
        FocalModel::Literal => half_w * ((hfov_deg / 180.0) * std::f64::consts::FRAC_PI_2).atan(),
    };
    CameraIntrinsics::new(f, half_w, height as f64 / 2.0, width, height)
}

/// Projects a world point through a `camera_from_world` pose.
pub fn project(
    k: &CameraIntrinsics,
    camera_from_world: &Pose,
    p: &Point3<f64>,
) -> Result<Point2<f64>> {
    k.project_camera(&camera_from_world.transform_point(p))
}

/// Moves a reference pixel with inverse depth `inverse_depth` into the frame
/// related by `cur_from_ref`.
pub fn warp(
    pixel: &Point2<f64>,
    inverse_depth: f64,
    cur_from_ref: &Pose,
    k: &CameraIntrinsics,
) -> Result<Point2<f64>> {
    if !(inverse_depth > 0.0 && inverse_depth.is_finite()) {
        return Err(Error::invalid(format!(
            "inverse depth must be positive, got {inverse_depth}"
        )));
    }
    let p_ref = k.backproject(pixel, 1.0 / inverse_depth);
    k.project_camera(&cur_from_ref.transform_point(&p_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    #[test]
    fn geometric_focal_for_90_degrees() {
        let k = approximate_intrinsics(1920, 1080, 90.0, FocalModel::Geometric).unwrap();
        assert!((k.f - 960.0).abs() < 1e-9);
        assert_eq!((k.cx, k.cy), (960.0, 540.0));
    }

    #[test]
    fn literal_focal_matches_closed_form() {
        let k = approximate_intrinsics(1920, 1080, 90.0, FocalModel::Literal).unwrap();
        // 960 * atan(pi/4)
        assert!((k.f - 639.1428000272197).abs() < 1e-9);
        assert!((k.f - 639.16).abs() < 0.05);
    }

    #[test]
    fn unit_intrinsics() {
        let k = approximate_intrinsics(2, 2, 90.0, FocalModel::Geometric).unwrap();
        assert!((k.f - 1.0).abs() < 1e-12);
        assert_eq!((k.cx, k.cy), (1.0, 1.0));
    }

    #[test]
    fn intrinsics_reject_bad_arguments() {
        assert!(approximate_intrinsics(0, 10, 90.0, FocalModel::Geometric).is_err());
        assert!(approximate_intrinsics(10, 0, 90.0, FocalModel::Geometric).is_err());
        assert!(approximate_intrinsics(10, 10, 0.0, FocalModel::Geometric).is_err());
        assert!(approximate_intrinsics(10, 10, 180.0, FocalModel::Geometric).is_err());
    }

    #[test]
    fn project_examples() {
        let k = CameraIntrinsics::new(1.0, 0.0, 0.0, 10, 10).unwrap();
        let px = project(&k, &Pose::identity(), &Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, Point2::new(0.0, 0.0));

        let k = CameraIntrinsics::new(100.0, 50.0, 50.0, 100, 100).unwrap();
        let px = project(&k, &Pose::identity(), &Point3::new(1.0, 0.0, 2.0)).unwrap();
        assert!((px - Point2::new(100.0, 50.0)).norm() < 1e-12);

        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, -3.0));
        assert!(matches!(
            project(&k, &pose, &Point3::new(0.0, 0.0, 2.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn warp_identity_is_identity() {
        let k = CameraIntrinsics::new(300.0, 160.0, 120.0, 320, 240).unwrap();
        let px = warp(&Point2::new(10.0, 20.0), 0.5, &Pose::identity(), &k).unwrap();
        assert!((px - Point2::new(10.0, 20.0)).norm() < 1e-12);
    }

    #[test]
    fn forward_translation_moves_pixels_outward() {
        let k = CameraIntrinsics::new(300.0, 160.0, 120.0, 320, 240).unwrap();
        let x = Point2::new(200.0, 150.0);
        let depth = 4.0;
        // Camera moves 2 m toward the scene: points move to z - 2.
        let xi = Pose::from_translation(Vector3::new(0.0, 0.0, -2.0));
        let got = warp(&x, 1.0 / depth, &xi, &k).unwrap();
        let oracle = k
            .project_camera(&xi.transform_point(&k.backproject(&x, depth)))
            .unwrap();
        assert!((got - oracle).norm() < 1e-12);
        let c = Point2::new(k.cx, k.cy);
        assert!((got - c).norm() > (x - c).norm());
        // Depth halves, so the offset from the principal point doubles.
        assert!(((got - c).norm() - 2.0 * (x - c).norm()).abs() < 1e-9);
    }

    #[test]
    fn warp_behind_camera() {
        let k = CameraIntrinsics::new(300.0, 160.0, 120.0, 320, 240).unwrap();
        let xi = Pose::from_translation(Vector3::new(0.0, 0.0, -5.0));
        assert!(matches!(
            warp(&Point2::new(160.0, 120.0), 0.5, &xi, &k),
            Err(Error::BehindCamera { .. })
        ));
    }

    proptest! {
        #[test]
        fn project_backproject_round_trip(
            u in 0.0f64..640.0, v in 0.0f64..480.0, depth in 0.1f64..100.0,
        ) {
            let k = CameraIntrinsics::new(320.0, 320.0, 240.0, 640, 480).unwrap();
            let px = Point2::new(u, v);
            let back = k.project_camera(&k.backproject(&px, depth)).unwrap();
            prop_assert!((back - px).norm() < 1e-9);
        }

        #[test]
        fn warp_round_trips_through_inverse(
            u in 50.0f64..590.0, v in 50.0f64..430.0, depth in 2.0f64..50.0,
            w in prop::array::uniform3(-0.05f64..0.05),
            t in prop::array::uniform3(-0.3f64..0.3),
        ) {
            let k = CameraIntrinsics::new(320.0, 320.0, 240.0, 640, 480).unwrap();
            let xi = Pose::new(Rotation3::new(Vector3::from(w)), Vector3::from(t));
            let px = Point2::new(u, v);
            let p_cur = xi.transform_point(&k.backproject(&px, depth));
            let fwd = warp(&px, 1.0 / depth, &xi, &k).unwrap();
            let back = warp(&fwd, 1.0 / p_cur.z, &xi.inverse(), &k).unwrap();
            prop_assert!((back - px).norm() < 1e-9);
        }
    }
}
