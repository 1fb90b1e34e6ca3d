use nalgebra::{Point2, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skyloc_core::geometry::CameraIntrinsics;
use skyloc_core::ground::*;
use skyloc_core::synth::{build_scene, SceneSpec};

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(320.0, 320.0, 240.0, 640, 480).unwrap()
}

/// Ground samples under an 8x8 pixel grid in the lower part of the image,
/// with multiplicative depth noise `rel`.
fn grid_samples(plane: &GroundPlane, rel: f64, seed: u64) -> Vec<GroundSample> {
    let k = camera();
    let normal = Normal::new(0.0, rel).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for j in 0..8 {
        for i in 0..8 {
            let px = Point2::new(40.0 + 80.0 * i as f64, 260.0 + 28.0 * j as f64);
            let p = backproject_footpoint(&px, plane, &k).unwrap();
            let z = p.z * (1.0 + normal.sample(&mut rng));
            let q = k.backproject(&px, z);
            out.push(GroundSample { x: q.x, y: q.y, z_bar: q.z });
        }
    }
    out
}

fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let sin = a.cross(b).norm();
    sin.atan2(a.dot(b))
}

#[test]
fn exact_samples_recover_normal() {
    for pitch_deg in [5.0f64, 15.0, 30.0, 60.0, 85.0] {
        let plane = GroundPlane::from_pitch(pitch_deg.to_radians(), 10.0).unwrap();
        let samples = grid_samples(&plane, 0.0, 0);
        let n = fit_plane_cramer(&samples).unwrap();
        assert!(angle(&n, &plane.n) < 1e-7, "pitch {pitch_deg}: {}", angle(&n, &plane.n));
        assert!(angle(&fit_plane(&samples).unwrap(), &plane.n) < 1e-7);
    }
}

#[test]
fn one_percent_noise_stays_within_two_degrees() {
    let plane = GroundPlane::from_pitch(15f64.to_radians(), 10.0).unwrap();
    let passes = (0..100u64)
        .filter(|seed| {
            let samples = grid_samples(&plane, 0.01, *seed);
            assert!(samples.len() >= 50);
            let n = fit_plane_cramer(&samples).unwrap();
            angle(&n, &plane.n).to_degrees() < 2.0
        })
        .count();
    assert!(passes >= 95, "{passes} / 100 within 2 degrees");
}

#[test]
fn estimated_ground_under_detections() {
    let truth = build_scene(&SceneSpec { frames: 20, ..SceneSpec::default() }).unwrap();
    let dets = truth.detections();
    for f in 0..truth.frame_count() {
        let frame: Vec<_> = dets.iter().filter(|d| d.frame == f).cloned().collect();
        let depth = truth.depth_raster(f).unwrap();
        let g = estimate_ground(&frame, &depth, &truth.intrinsics, None, DEFAULT_PATCH_FRACTION).unwrap();
        let expected = truth.ground_plane(f).unwrap();
        assert!(angle(&g.plane.n, &expected.n) < 1e-6);
        assert!((g.plane.h_cam - expected.h_cam).abs() < 1e-5);
        // A reference height rescales the plane, not its orientation.
        let scaled = estimate_ground(&frame, &depth, &truth.intrinsics, Some(20.0), DEFAULT_PATCH_FRACTION).unwrap();
        assert!((scaled.plane.h_cam - 20.0).abs() < 1e-12);
        assert!((scaled.depth_scale - 2.0).abs() < 1e-5);
    }
}

#[test]
fn synthetic_footpoints_localize_exactly() {
    let truth = build_scene(&SceneSpec { frames: 30, ..SceneSpec::default() }).unwrap();
    for f in 0..truth.frame_count() {
        let plane = truth.ground_plane(f).unwrap();
        for o in &truth.observations[f] {
            let c = backproject_footpoint(&o.footpoint_pixel, &plane, &truth.intrinsics).unwrap();
            assert!((c - o.footpoint_camera).norm() < 0.05 * object_distance(&o.footpoint_camera) / 10.0);
            assert!((object_distance(&c) - object_distance(&o.footpoint_camera)).abs() < 1e-6);
        }
    }
}

prop_compose! {
    fn arb_plane()(pitch in 0.05f64..1.5, roll in -0.3f64..0.3, h in 0.5f64..50.0) -> GroundPlane {
        let n = nalgebra::Rotation3::from_euler_angles(0.0, 0.0, roll) * Vector3::new(0.0, pitch.cos(), pitch.sin());
        GroundPlane::new(n, h).unwrap()
    }
}

proptest! {
    #[test]
    fn backprojection_round_trip(plane in arb_plane(), u in 0.0f64..640.0, v in 0.0f64..480.0) {
        let k = camera();
        let px = Point2::new(u, v);
        prop_assume!(plane.n.dot(&k.ray(&px)) > 1e-3);
        let c = backproject_footpoint(&px, &plane, &k).unwrap();
        prop_assert!(plane.signed_distance(&c).abs() < 1e-9 * plane.h_cam.max(1.0));
        let again = backproject_footpoint(&k.project_camera(&c).unwrap(), &plane, &k).unwrap();
        prop_assert!((again - c).norm() < 1e-9, "{}", (again - c).norm());
    }

    #[test]
    fn height_scaling_is_a_similarity(plane in arb_plane(), s in 0.1f64..10.0, u in 0.0f64..640.0, v in 240.0f64..480.0) {
        let k = camera();
        let px = Point2::new(u, v);
        prop_assume!(plane.n.dot(&k.ray(&px)) > 1e-3);
        let c = backproject_footpoint(&px, &plane, &k).unwrap();
        let cs = backproject_footpoint(&px, &plane.scaled(s).unwrap(), &k).unwrap();
        prop_assert!((cs.coords - c.coords * s).norm() <= 1e-12 * cs.coords.norm());
    }

    #[test]
    fn cramer_fit_ignores_scale_and_order(pitch in 0.1f64..1.4, s in 0.01f64..100.0, rot in 0usize..64, noise in 0u64..50) {
        let plane = GroundPlane::from_pitch(pitch, 10.0).unwrap();
        let samples = grid_samples(&plane, 0.005, noise);
        let n = fit_plane_cramer(&samples).unwrap();
        let scaled: Vec<_> = samples.iter().map(|p| GroundSample { x: p.x * s, y: p.y * s, z_bar: p.z_bar * s }).collect();
        let mut shuffled = samples.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        for other in [fit_plane_cramer(&scaled).unwrap(), fit_plane_cramer(&shuffled).unwrap()] {
            prop_assert!(angle(&n, &other).min(angle(&n, &-other)) < 1e-9);
        }
    }

    #[test]
    fn on_plane_points_satisfy_pitch_relation(pitch in 0.05f64..1.5, h in 0.5f64..50.0, u in 0.0f64..640.0, v in 300.0f64..480.0) {
        let plane = GroundPlane::from_pitch(pitch, h).unwrap();
        let c = backproject_footpoint(&Point2::new(u, v), &plane, &camera()).unwrap();
        let rel = c.y * plane.theta.cos() - c.z * plane.theta.sin();
        prop_assert!((rel - h).abs() < 1e-9 * h.max(1.0));
        prop_assert!((plane.n.norm() - 1.0).abs() < 1e-12);
    }
}
