use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FeaturePoint;
use crate::depth::DepthHypothesis;
use crate::error::{Error, Result};
use crate::image::IntensityImage;

/// One map location with its inverse-depth belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    pub pixel: Point2<f64>,
    /// Inverse depth mean, 1/m.
    pub inv_depth: f64,
    /// Inverse depth variance, 1/m^2.
    pub inv_variance: f64,
}

impl MapEntry {
    pub fn hypothesis(&self) -> Result<DepthHypothesis> {
        DepthHypothesis::from_inverse(self.inv_depth, self.inv_variance)
    }

    pub fn from_hypothesis(pixel: Point2<f64>, h: &DepthHypothesis) -> Self {
        let (inv_depth, inv_variance) = h.to_inverse();
        Self {
            pixel,
            inv_depth,
            inv_variance,
        }
    }
}

/// Reference image with sparse inverse-depth samples at feature locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    pub reference: IntensityImage,
    pub entries: Vec<MapEntry>,
}

impl SparseDepthMap {
    pub fn new(reference: IntensityImage, entries: Vec<MapEntry>) -> Result<Self> {
        for e in &entries {
            if !(e.inv_depth > 0.0 && e.inv_variance > 0.0) {
                return Err(Error::invalid("map entries need positive mean and variance"));
            }
            if !reference.contains(&e.pixel, 0.0) {
                return Err(Error::invalid("map entry outside the reference image"));
            }
        }
        Ok(Self { reference, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose inverse-depth variance is below `threshold`.
    pub fn trusted(&self, threshold: f64) -> impl Iterator<Item = &MapEntry> {
        self.entries.iter().filter(move |e| e.inv_variance < threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapInitConfig {
    /// Uniform prior range of the inverse depth, 1/m.
    pub prior_range: (f64, f64),
    /// Initial inverse-depth variance, 1/m^2.
    pub initial_variance: f64,
    /// Minimum distance from the image border, pixels.
    pub margin: f64,
}

impl Default for MapInitConfig {
    fn default() -> Self {
        Self {
            prior_range: (0.1, 2.0),
            initial_variance: 4.0,
            margin: 2.0,
        }
    }
}

/// Seeds a map at the feature locations with random inverse depths and a
/// large variance. Deterministic for a given seed.
pub fn initialize_depth_map(
    frame: &IntensityImage,
    features: &[FeaturePoint],
    seed: u64,
    cfg: &MapInitConfig,
) -> Result<SparseDepthMap> {
    if features.is_empty() {
        return Err(Error::invalid("no features to seed the depth map"));
    }
    let (lo, hi) = cfg.prior_range;
    if !(lo > 0.0 && hi > lo) || !(cfg.initial_variance > 0.0) {
        return Err(Error::invalid("invalid depth prior"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<MapEntry> = features
        .iter()
        .filter(|f| frame.contains(&f.pixel, cfg.margin))
        .map(|f| MapEntry {
            pixel: f.pixel,
            inv_depth: rng.random_range(lo..hi),
            inv_variance: cfg.initial_variance,
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::invalid("all features lie within the border margin"));
    }
    SparseDepthMap::new(frame.clone(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(n: usize) -> Vec<FeaturePoint> {
        (0..n)
            .map(|i| FeaturePoint {
                pixel: Point2::new(5.0 + (i % 10) as f64 * 5.0, 5.0 + (i / 10) as f64 * 5.0),
                descriptor: vec![i as f64],
            })
            .collect()
    }

    #[test]
    fn deterministic_and_in_range() {
        let img = IntensityImage::constant(64, 64, 0.5).unwrap();
        let feats = features(100);
        let cfg = MapInitConfig::default();
        let a = initialize_depth_map(&img, &feats, 7, &cfg).unwrap();
        let b = initialize_depth_map(&img, &feats, 7, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a
            .entries
            .iter()
            .all(|e| (0.1..2.0).contains(&e.inv_depth) && e.inv_variance == 4.0));
        let c = initialize_depth_map(&img, &feats, 8, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_features_rejected() {
        let img = IntensityImage::constant(8, 8, 0.5).unwrap();
        assert!(matches!(
            initialize_depth_map(&img, &[], 1, &MapInitConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
