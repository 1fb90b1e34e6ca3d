#![allow(dead_code)]

use nalgebra::{Point2, Point3};
use skyloc_core::depth::WindowFrame;
use skyloc_core::image::IntensityImage;
use skyloc_core::synth::{build_scene, ScenarioTruth, SceneSpec};

/// Nadir camera 1 m above finely textured ground, sweeping sideways at
/// 0.3 m/s for 30 frames.
pub const SWEEP_SCENE: &str = "\
[scene]
frames = 30
width = 320
height = 240
seed = 3
[camera]
height = 1.0
pitch = 90
velocity = 0.3, 0.0
[texture]
cell = 0.05
octaves = 2
amplitude = 0.3
[objects]
count = 1
size = 0.05, 0.05, 0.05
distance = 0.05, 0.2
speed = 0, 0
[features]
spacing = 0.04
range = 2.0
";

pub fn sweep_scene() -> ScenarioTruth {
    build_scene(&SceneSpec::parse(SWEEP_SCENE).unwrap()).unwrap()
}

pub fn render_all(truth: &ScenarioTruth) -> Vec<IntensityImage> {
    (0..truth.frame_count()).map(|f| truth.render_frame(f).unwrap()).collect()
}

pub fn window<'a>(truth: &ScenarioTruth, images: &'a [IntensityImage]) -> Vec<WindowFrame<'a>> {
    images
        .iter()
        .enumerate()
        .map(|(i, image)| WindowFrame {
            index: i,
            image,
            world_from_camera: truth.poses[i],
        })
        .collect()
}

/// Ground point seen at `pixel` in `frame`, in that camera's frame.
pub fn ground_in_camera(truth: &ScenarioTruth, frame: usize, pixel: &Point2<f64>) -> Point3<f64> {
    let world = truth.ground_hit(frame, pixel).expect("pixel sees the ground");
    truth.poses[frame].inverse().transform_point(&world)
}

/// Whether the ground point under `pixel` in frame 0 stays inside every
/// frame with `margin` pixels to spare.
pub fn visible_throughout(truth: &ScenarioTruth, pixel: &Point2<f64>, margin: f64) -> bool {
    let Some(world) = truth.ground_hit(0, pixel) else {
        return false;
    };
    truth.poses.iter().all(|pose| {
        let p = pose.inverse().transform_point(&world);
        truth.intrinsics.project_camera(&p).is_ok_and(|q| truth.intrinsics.contains(&q, margin))
    })
}
