use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Texture;
use crate::config::KeyValueConfig;
use crate::depth::DenseDepthMap;
use crate::error::{Error, Result};
use crate::geometry::{approximate_intrinsics, CameraIntrinsics, FocalModel, Pose};
use crate::ground::GroundPlane;
use crate::image::IntensityImage;
use crate::tracker::{BBox, Detection};

/// Scene description. World frame: `Y` points down, the ground is `Y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub focal_model: FocalModel,
    /// Camera height above the ground, meters.
    pub camera_height: f64,
    /// Downward pitch, degrees.
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub yaw_rate_deg: f64,
    /// Ground-plane camera velocity `(x, z)`, m/s.
    pub velocity: (f64, f64),
    /// Rotate in place (negative tests only).
    pub pure_rotation: bool,
    pub texture: Texture,
    pub object_count: usize,
    /// Object `(width, length, height)`, meters.
    pub object_size: (f64, f64, f64),
    /// Range of initial ground distance ahead of the camera, meters.
    pub object_distance: (f64, f64),
    /// Lateral offset bound as a fraction of the ground distance.
    pub object_lateral: f64,
    /// Speed range, m/s.
    pub object_speed: (f64, f64),
    pub classes: usize,
    pub embedding_dim: usize,
    /// Largest pairwise box overlap allowed between objects in any frame.
    pub max_object_iou: f64,
    pub feature_spacing: f64,
    pub feature_range: f64,
    pub descriptor_len: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            frames: 300,
            fps: 30.0,
            width: 640,
            height: 480,
            hfov_deg: 90.0,
            focal_model: FocalModel::Geometric,
            camera_height: 10.0,
            pitch_deg: 15.0,
            yaw_deg: 0.0,
            yaw_rate_deg: 0.0,
            velocity: (0.0, 0.5),
            pure_rotation: false,
            texture: Texture {
                base: 0.5,
                amplitude: 0.25,
                cell: 0.5,
                octaves: 3,
                seed: 1,
            },
            object_count: 5,
            object_size: (0.6, 0.6, 1.7),
            object_distance: (8.0, 33.0),
            object_lateral: 0.6,
            object_speed: (0.3, 1.2),
            classes: 1,
            embedding_dim: 16,
            max_object_iou: 0.05,
            feature_spacing: 1.0,
            feature_range: 60.0,
            descriptor_len: 8,
        }
    }
}

fn pair(cfg: &KeyValueConfig, section: &str, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match cfg.get_list::<f64>(section, key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(v) => Err(Error::invalid(format!("[{section}] {key}: expected 2 values, got {}", v.len()))),
    }
}

impl SceneSpec {
    /// Reads a `key = value` scene description; missing keys keep defaults.
    pub fn from_config(cfg: &KeyValueConfig) -> Result<Self> {
        let d = Self::default();
        let focal_model = match cfg.raw("scene", "focal_model").unwrap_or("geometric") {
            "geometric" => FocalModel::Geometric,
            "literal" => FocalModel::Literal,
            other => return Err(Error::invalid(format!("unknown focal model '{other}'"))),
        };
        let size = match cfg.get_list::<f64>("objects", "size")? {
            None => d.object_size,
            Some(v) if v.len() == 3 => (v[0], v[1], v[2]),
            Some(_) => return Err(Error::invalid("[objects] size: expected width, length, height")),
        };
        let seed = cfg.get_or("scene", "seed", d.seed)?;
        let spec = Self {
            seed,
            frames: cfg.get_or("scene", "frames", d.frames)?,
            fps: cfg.get_or("scene", "fps", d.fps)?,
            width: cfg.get_or("scene", "width", d.width)?,
            height: cfg.get_or("scene", "height", d.height)?,
            hfov_deg: cfg.get_or("scene", "hfov", d.hfov_deg)?,
            focal_model,
            camera_height: cfg.get_or("camera", "height", d.camera_height)?,
            pitch_deg: cfg.get_or("camera", "pitch", d.pitch_deg)?,
            yaw_deg: cfg.get_or("camera", "yaw", d.yaw_deg)?,
            yaw_rate_deg: cfg.get_or("camera", "yaw_rate", d.yaw_rate_deg)?,
            velocity: pair(cfg, "camera", "velocity", d.velocity)?,
            pure_rotation: cfg.get_or("camera", "pure_rotation", d.pure_rotation)?,
            texture: Texture {
                base: cfg.get_or("texture", "base", d.texture.base)?,
                amplitude: cfg.get_or("texture", "amplitude", d.texture.amplitude)?,
                cell: cfg.get_or("texture", "cell", d.texture.cell)?,
                octaves: cfg.get_or("texture", "octaves", d.texture.octaves)?,
                seed: cfg.get_or("texture", "seed", seed)?,
            },
            object_count: cfg.get_or("objects", "count", d.object_count)?,
            object_size: size,
            object_distance: pair(cfg, "objects", "distance", d.object_distance)?,
            object_lateral: cfg.get_or("objects", "lateral", d.object_lateral)?,
            object_speed: pair(cfg, "objects", "speed", d.object_speed)?,
            classes: cfg.get_or("objects", "classes", d.classes)?,
            embedding_dim: cfg.get_or("objects", "embedding_dim", d.embedding_dim)?,
            max_object_iou: cfg.get_or("objects", "max_iou", d.max_object_iou)?,
            feature_spacing: cfg.get_or("features", "spacing", d.feature_spacing)?,
            feature_range: cfg.get_or("features", "range", d.feature_range)?,
            descriptor_len: cfg.get_or("features", "descriptor_len", d.descriptor_len)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_config(&KeyValueConfig::parse(text)?)
    }

    /// Complete description with every key explicit; inverse of
    /// [`SceneSpec::from_config`].
    pub fn to_config(&self) -> KeyValueConfig {
        let pair = |(a, b): (f64, f64)| format!("{a}, {b}");
        let mut cfg = KeyValueConfig::default();
        cfg.set("scene", "seed", self.seed);
        cfg.set("scene", "frames", self.frames);
        cfg.set("scene", "fps", self.fps);
        cfg.set("scene", "width", self.width);
        cfg.set("scene", "height", self.height);
        cfg.set("scene", "hfov", self.hfov_deg);
        let model = match self.focal_model {
            FocalModel::Geometric => "geometric",
            FocalModel::Literal => "literal",
        };
        cfg.set("scene", "focal_model", model);
        cfg.set("camera", "height", self.camera_height);
        cfg.set("camera", "pitch", self.pitch_deg);
        cfg.set("camera", "yaw", self.yaw_deg);
        cfg.set("camera", "yaw_rate", self.yaw_rate_deg);
        cfg.set("camera", "velocity", pair(self.velocity));
        cfg.set("camera", "pure_rotation", self.pure_rotation);
        cfg.set("texture", "base", self.texture.base);
        cfg.set("texture", "amplitude", self.texture.amplitude);
        cfg.set("texture", "cell", self.texture.cell);
        cfg.set("texture", "octaves", self.texture.octaves);
        cfg.set("texture", "seed", self.texture.seed);
        cfg.set("objects", "count", self.object_count);
        let (w, l, h) = self.object_size;
        cfg.set("objects", "size", format!("{w}, {l}, {h}"));
        cfg.set("objects", "distance", pair(self.object_distance));
        cfg.set("objects", "lateral", self.object_lateral);
        cfg.set("objects", "speed", pair(self.object_speed));
        cfg.set("objects", "classes", self.classes);
        cfg.set("objects", "embedding_dim", self.embedding_dim);
        cfg.set("objects", "max_iou", self.max_object_iou);
        cfg.set("features", "spacing", self.feature_spacing);
        cfg.set("features", "range", self.feature_range);
        cfg.set("features", "descriptor_len", self.descriptor_len);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(m.to_string()));
        if self.frames == 0 || self.width < 8 || self.height < 8 {
            return fail("scene needs at least one frame and an 8x8 image");
        }
        if !(self.fps > 0.0) {
            return fail("fps must be positive");
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return fail("hfov must lie in (0, 180) degrees");
        }
        if !(self.camera_height > 0.0) {
            return fail("camera height must be positive");
        }
        if !(-90.0..=90.0).contains(&self.pitch_deg) {
            return fail("pitch must lie in [-90, 90] degrees");
        }
        if self.object_count == 0 {
            return fail("scene needs at least one object");
        }
        let (w, l, h) = self.object_size;
        if !(w > 0.0 && l > 0.0 && h > 0.0) {
            return fail("object size must be positive");
        }
        let (d0, d1) = self.object_distance;
        if !(d0 > 0.0 && d1 >= d0) {
            return fail("object distance range must be positive and ordered");
        }
        let (s0, s1) = self.object_speed;
        if !(s0 >= 0.0 && s1 >= s0) {
            return fail("object speed range must be non-negative and ordered");
        }
        if self.classes == 0 || self.embedding_dim == 0 || self.descriptor_len == 0 {
            return fail("classes, embedding and descriptor sizes must be positive");
        }
        if !(self.texture.amplitude >= 0.0 && self.texture.cell > 0.0) {
            return fail("texture amplitude must be non-negative and cell positive");
        }
        if !(self.feature_spacing > 0.0 && self.feature_range > 0.0) {
            return fail("feature spacing and range must be positive");
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        approximate_intrinsics(self.width, self.height, self.hfov_deg, self.focal_model)
    }

    /// Camera pose at `frame`.
    pub fn camera_pose(&self, frame: usize) -> Pose {
        let t = frame as f64 / self.fps;
        let phi = self.pitch_deg.to_radians();
        let pitch = Matrix3::new(
            1.0, 0.0, 0.0, //
            0.0, phi.cos(), phi.sin(), //
            0.0, -phi.sin(), phi.cos(),
        );
        let mut yaw_rate = self.yaw_rate_deg;
        if self.pure_rotation && yaw_rate == 0.0 {
            yaw_rate = 5.0;
        }
        let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), (self.yaw_deg + yaw_rate * t).to_radians());
        let rot = Rotation3::from_matrix_unchecked(yaw.matrix() * pitch);
        let (vx, vz) = if self.pure_rotation { (0.0, 0.0) } else { self.velocity };
        Pose::new(rot, Vector3::new(vx * t, -self.camera_height, vz * t))
    }
}

/// Ground truth of one object: an upright box moving at constant velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTruth {
    /// 1-based identity.
    pub id: usize,
    pub class: i64,
    /// World footpoint (bottom-face center) at frame 0.
    pub start: Point3<f64>,
    /// World velocity, m/s (ground plane).
    pub velocity: Vector3<f64>,
    pub embedding: Vec<f64>,
}

/// One object seen in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub object: usize,
    pub bbox: BBox,
    pub footpoint_world: Point3<f64>,
    pub footpoint_camera: Point3<f64>,
    pub footpoint_pixel: Point2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    pub spec: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    /// `world_from_camera` per frame.
    pub poses: Vec<Pose>,
    pub objects: Vec<ObjectTruth>,
    /// Observations per frame, ordered by object id.
    pub observations: Vec<Vec<Observation>>,
    /// The camera only rotates, so no depth is observable from motion.
    pub depth_degenerate: bool,
}

fn object_position(o: &ObjectTruth, frame: usize, fps: f64) -> Point3<f64> {
    o.start + o.velocity * (frame as f64 / fps)
}

/// Projects an object's box; `None` unless all eight corners are in front of
/// the camera and the bounding box lies inside the image.
fn observe(
    spec: &SceneSpec,
    k: &CameraIntrinsics,
    pose: &Pose,
    o: &ObjectTruth,
    frame: usize,
) -> Option<Observation> {
    let foot = object_position(o, frame, spec.fps);
    let (w, l, h) = spec.object_size;
    let cam_from_world = pose.inverse();
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for dx in [-0.5, 0.5] {
        for dz in [-0.5, 0.5] {
            for dy in [0.0, -h] {
                let p = Point3::new(foot.x + dx * w, dy, foot.z + dz * l);
                let q = k.project_camera(&cam_from_world.transform_point(&p)).ok()?;
                lo = (lo.0.min(q.x), lo.1.min(q.y));
                hi = (hi.0.max(q.x), hi.1.max(q.y));
            }
        }
    }
    let (wmax, hmax) = ((k.width - 1) as f64, (k.height - 1) as f64);
    if lo.0 < 0.0 || lo.1 < 0.0 || hi.0 > wmax || hi.1 > hmax {
        return None;
    }
    let bbox = BBox::from_corners(lo.0, lo.1, hi.0, hi.1).ok()?;
    let footpoint_camera = cam_from_world.transform_point(&foot);
    Some(Observation {
        object: o.id,
        bbox,
        footpoint_world: foot,
        footpoint_pixel: k.project_camera(&footpoint_camera).ok()?,
        footpoint_camera,
    })
}

/// Builds a scene whose objects stay fully visible and mutually separated in
/// every frame. Deterministic in `spec.seed`.
pub fn build_scene(spec: &SceneSpec) -> Result<ScenarioTruth> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let poses: Vec<Pose> = (0..spec.frames).map(|f| spec.camera_pose(f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cam0 = &poses[0];
    // Horizontal heading; a nadir camera falls back to its yaw.
    let optical = cam0.transform_vector(&Vector3::z());
    let yaw = spec.yaw_deg.to_radians();
    let forward = Vector3::new(optical.x, 0.0, optical.z)
        .try_normalize(1e-9)
        .unwrap_or_else(|| Vector3::new(yaw.sin(), 0.0, yaw.cos()));
    let right = Vector3::new(forward.z, 0.0, -forward.x);
    let ground0 = Point3::new(cam0.translation().x, 0.0, cam0.translation().z);

    let mut objects: Vec<ObjectTruth> = Vec::new();
    let mut tracks: Vec<Vec<Observation>> = Vec::new();
    const TRIES: usize = 2000;
    for id in 1..=spec.object_count {
        let mut placed = false;
        for _ in 0..TRIES {
            let d = rng.random_range(spec.object_distance.0..=spec.object_distance.1);
            let lat = rng.random_range(-1.0..=1.0) * spec.object_lateral * d;
            let speed = rng.random_range(spec.object_speed.0..=spec.object_speed.1);
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let embedding: Vec<f64> = (0..spec.embedding_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = embedding.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            let o = ObjectTruth {
                id,
                class: ((id - 1) % spec.classes) as i64,
                start: ground0 + forward * d + right * lat,
                velocity: Vector3::new(heading.cos(), 0.0, heading.sin()) * speed,
                embedding: embedding.into_iter().map(|v| v / norm).collect(),
            };
            let obs: Option<Vec<Observation>> =
                poses.iter().enumerate().map(|(f, p)| observe(spec, &k, p, &o, f)).collect();
            let Some(obs) = obs else { continue };
            let separated = tracks
                .iter()
                .all(|other| other.iter().zip(&obs).all(|(a, b)| a.bbox.iou(&b.bbox) <= spec.max_object_iou));
            if separated {
                objects.push(o);
                tracks.push(obs);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(format!(
                "could not place object {id} visibly within {TRIES} attempts; widen the distance range or shorten the sequence"
            )));
        }
    }
    let observations = (0..spec.frames)
        .map(|f| tracks.iter().map(|t| t[f].clone()).collect())
        .collect();
    Ok(ScenarioTruth {
        spec: spec.clone(),
        intrinsics: k,
        poses,
        objects,
        observations,
        depth_degenerate: spec.pure_rotation,
    })
}

/// Variance attached to exact depths; the raster needs a positive one.
pub const TRUTH_VARIANCE: f64 = 1e-12;

impl ScenarioTruth {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    /// Exact detections with object ids, score 1 and truth embeddings.
    pub fn detections(&self) -> Vec<Detection> {
        let mut out = Vec::new();
        for (f, obs) in self.observations.iter().enumerate() {
            for o in obs {
                let truth = &self.objects[o.object - 1];
                out.push(Detection {
                    frame: f,
                    id: o.object as i64,
                    bbox: o.bbox,
                    score: 1.0,
                    class: truth.class,
                    embedding: Some(truth.embedding.clone()),
                });
            }
        }
        out
    }

    /// The ground plane in the camera frame of `frame`.
    pub fn ground_plane(&self, frame: usize) -> Result<GroundPlane> {
        let pose = &self.poses[frame];
        let n = pose.inverse().transform_vector(&Vector3::y());
        GroundPlane::new(n, -pose.translation().y)
    }

    /// Ground point hit by the ray through `pixel`, world frame.
    pub fn ground_hit(&self, frame: usize, pixel: &Point2<f64>) -> Option<Point3<f64>> {
        let pose = &self.poses[frame];
        let dir = pose.transform_vector(&self.intrinsics.ray(pixel));
        let origin = pose.translation();
        if dir.y <= 1e-12 {
            return None;
        }
        let s = -origin.y / dir.y;
        Some(Point3::from(origin + dir * s))
    }

    /// Intensity seen through `pixel` (sky above the horizon).
    pub fn intensity_at(&self, frame: usize, pixel: &Point2<f64>) -> f64 {
        match self.ground_hit(frame, pixel) {
            Some(p) => self.spec.texture.intensity(p.x, p.z),
            None => self.spec.texture.base,
        }
    }

    pub fn render_frame(&self, frame: usize) -> Result<IntensityImage> {
        if frame >= self.frame_count() {
            return Err(Error::invalid(format!("frame {frame} out of range")));
        }
        IntensityImage::from_fn(self.spec.width, self.spec.height, |x, y| {
            self.intensity_at(frame, &Point2::new(x as f64, y as f64))
        })
    }

    /// True z-depth of the ground per pixel; sky pixels are unknown.
    pub fn depth_raster(&self, frame: usize) -> Result<DenseDepthMap> {
        if frame >= self.frame_count() {
            return Err(Error::invalid(format!("frame {frame} out of range")));
        }
        let (w, h) = (self.spec.width, self.spec.height);
        let plane = self.ground_plane(frame)?;
        let mut depth = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let ray = self.intrinsics.ray(&Point2::new(x as f64, y as f64));
                let den = plane.n.dot(&ray);
                if den > 1e-12 {
                    depth[y * w + x] = plane.h_cam / den;
                }
            }
        }
        let var = depth.iter().map(|d| if *d > 0.0 { TRUTH_VARIANCE } else { 0.0 }).collect();
        DenseDepthMap::new(w, h, depth, var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneSpec {
        SceneSpec {
            frames: 40,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn counting_and_determinism() {
        let spec = SceneSpec::default();
        let a = build_scene(&spec).unwrap();
        assert_eq!(a.detections().len(), 1500);
        let b = build_scene(&spec).unwrap();
        assert_eq!(a, b);
        let other = build_scene(&SceneSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.objects, other.objects);
    }

    #[test]
    fn footpoints_on_plane() {
        let s = build_scene(&small()).unwrap();
        for (f, obs) in s.observations.iter().enumerate() {
            let plane = s.ground_plane(f).unwrap();
            for o in obs {
                assert_eq!(o.footpoint_world.y, 0.0);
                assert!(plane.signed_distance(&o.footpoint_camera).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ground_plane_matches_pitch() {
        let s = build_scene(&small()).unwrap();
        let p = s.ground_plane(0).unwrap();
        assert!((p.h_cam - 10.0).abs() < 1e-12);
        assert!((p.theta + 15f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn pure_rotation_is_flagged() {
        let s = build_scene(&SceneSpec {
            pure_rotation: true,
            frames: 10,
            ..SceneSpec::default()
        })
        .unwrap();
        assert!(s.depth_degenerate);
        assert_eq!(s.poses[0].translation(), s.poses[9].translation());
        assert!(s.poses[0].rotation_angle_to(&s.poses[9]) > 0.0);
    }

    #[test]
    fn spec_parsing_and_validation() {
        let spec = SceneSpec::parse("[scene]\nframes = 12\nseed = 4\n[objects]\ncount = 2\nsize = 1, 2, 1.5\n").unwrap();
        assert_eq!(spec.frames, 12);
        assert_eq!(spec.object_count, 2);
        assert_eq!(spec.object_size, (1.0, 2.0, 1.5));
        assert_eq!(spec.texture.seed, 4);
        assert!(SceneSpec::parse("[objects]\ncount = 0\n").is_err());
        assert!(SceneSpec::parse("[camera]\nheight = -1\n").is_err());
    }

    #[test]
    fn identical_pose_identical_image() {
        let spec = SceneSpec {
            frames: 3,
            width: 64,
            height: 48,
            velocity: (0.0, 0.0),
            object_distance: (20.0, 25.0),
            ..SceneSpec::default()
        };
        let s = build_scene(&spec).unwrap();
        assert_eq!(s.render_frame(0).unwrap(), s.render_frame(2).unwrap());
    }

    #[test]
    fn zero_amplitude_is_uniform() {
        let mut spec = small();
        spec.width = 64;
        spec.height = 48;
        spec.object_distance = (20.0, 25.0);
        spec.texture.amplitude = 0.0;
        let s = build_scene(&spec).unwrap();
        let img = s.render_frame(5).unwrap();
        assert!(img.values().iter().all(|v| *v == spec.texture.base));
    }
}
