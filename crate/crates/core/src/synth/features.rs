use nalgebra::{Point2, Point3};

use super::texture::lattice_value;
use super::ScenarioTruth;
use crate::alignment::{FeaturePoint, FeatureProvider, FeatureTable};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};

/// Features at world ground-lattice points. Each lattice point carries a
/// hashed descriptor, so identical points match across frames.
#[derive(Debug, Clone)]
pub struct SyntheticFeatures {
    poses: Vec<Pose>,
    k: CameraIntrinsics,
    spacing: f64,
    range: f64,
    descriptor_len: usize,
    seed: u64,
    /// Minimum distance from the image border, pixels.
    pub margin: f64,
}

impl SyntheticFeatures {
    pub fn new(truth: &ScenarioTruth) -> Self {
        Self {
            poses: truth.poses.clone(),
            k: truth.intrinsics,
            spacing: truth.spec.feature_spacing,
            range: truth.spec.feature_range,
            descriptor_len: truth.spec.descriptor_len,
            seed: truth.spec.seed ^ 0xFEA7,
            margin: 4.0,
        }
    }

    fn descriptor(&self, ix: i64, iz: i64) -> Vec<f64> {
        (0..self.descriptor_len as u64)
            .map(|c| lattice_value(self.seed, ix, iz, c))
            .collect()
    }

    /// All frames as a feature table.
    pub fn table(&self) -> Result<FeatureTable> {
        let mut t = FeatureTable::new();
        for f in 0..self.poses.len() {
            for p in self.features(f)? {
                t.insert(f, p)?;
            }
        }
        Ok(t)
    }
}

impl FeatureProvider for SyntheticFeatures {
    fn features(&self, frame: usize) -> Result<Vec<FeaturePoint>> {
        let pose = self
            .poses
            .get(frame)
            .ok_or_else(|| Error::invalid(format!("frame {frame} out of range")))?;
        let c = pose.translation();
        let cam_from_world = pose.inverse();
        let n = (self.range / self.spacing).ceil() as i64;
        let (cx, cz) = ((c.x / self.spacing).round() as i64, (c.z / self.spacing).round() as i64);
        let mut out = Vec::new();
        for iz in cz - n..=cz + n {
            for ix in cx - n..=cx + n {
                let p = Point3::new(ix as f64 * self.spacing, 0.0, iz as f64 * self.spacing);
                if (p.x - c.x).hypot(p.z - c.z) > self.range {
                    continue;
                }
                let Ok(px) = self.k.project_camera(&cam_from_world.transform_point(&p)) else {
                    continue;
                };
                if self.k.contains(&px, self.margin) {
                    out.push(FeaturePoint {
                        pixel: Point2::new(px.x, px.y),
                        descriptor: self.descriptor(ix, iz),
                    });
                }
            }
        }
        Ok(out)
    }
}
