use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::texture::mix64;
use super::ScenarioTruth;
use crate::error::{Error, Result};
use crate::tracker::{BBox, Detection};

/// Frames `[start, end]` (inclusive) in which an object emits no detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub object: usize,
    pub start: usize,
    pub end: usize,
}

/// Detector imperfections applied to truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionConfig {
    /// Box-center noise std, pixels.
    pub center_noise: f64,
    /// Box-size noise std, relative.
    pub size_noise: f64,
    /// Scores of reliable detections are uniform in this range.
    pub score_range: (f64, f64),
    /// Probability that a detection is unreliable: its score falls in
    /// `low_score_range` and its noise is multiplied by `low_score_noise_gain`.
    pub low_score_prob: f64,
    pub low_score_range: (f64, f64),
    pub low_score_noise_gain: f64,
    pub miss_prob: f64,
    pub occlusions: Vec<Occlusion>,
    pub embedding_noise: f64,
    /// Keep truth identities in the output instead of `-1`.
    pub keep_ids: bool,
    pub seed: u64,
}

impl CorruptionConfig {
    /// Identity corruption: exact boxes, score 1.
    pub fn none() -> Self {
        Self {
            center_noise: 0.0,
            size_noise: 0.0,
            score_range: (1.0, 1.0),
            low_score_prob: 0.0,
            low_score_range: (0.0, 0.2),
            low_score_noise_gain: 1.0,
            miss_prob: 0.0,
            occlusions: Vec::new(),
            embedding_noise: 0.0,
            keep_ids: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let range = |r: (f64, f64)| prob(r.0) && prob(r.1) && r.0 <= r.1;
        if !(prob(self.miss_prob) && prob(self.low_score_prob)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        if !(range(self.score_range) && range(self.low_score_range)) {
            return Err(Error::invalid("score ranges must be ordered within [0, 1]"));
        }
        let stds = [self.center_noise, self.size_noise, self.embedding_noise, self.low_score_noise_gain];
        if !stds.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(Error::invalid("noise levels must be finite and non-negative"));
        }
        if self.occlusions.iter().any(|o| o.end < o.start) {
            return Err(Error::invalid("occlusion interval ends before it starts"));
        }
        Ok(())
    }

    fn occluded(&self, object: usize, frame: usize) -> bool {
        self.occlusions
            .iter()
            .any(|o| o.object == object && (o.start..=o.end).contains(&frame))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).map(|n| n.sample(rng)).unwrap_or(0.0)
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..=r.1)
    }
}

/// Applies misses, occlusion blanking and noise to the truth detections.
/// Each (frame, object) draws from its own stream, so changing one
/// occlusion does not perturb the rest of the output.
pub fn corrupt_detections(truth: &ScenarioTruth, cfg: &CorruptionConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (frame, obs) in truth.observations.iter().enumerate() {
        for o in obs {
            if cfg.occluded(o.object, frame) {
                continue;
            }
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ mix64(frame as u64 ^ mix64(o.object as u64))));
            if cfg.miss_prob > 0.0 && rng.random_bool(cfg.miss_prob) {
                continue;
            }
            let low = cfg.low_score_prob > 0.0 && rng.random_bool(cfg.low_score_prob);
            let (score, gain) = if low {
                (uniform(&mut rng, cfg.low_score_range), cfg.low_score_noise_gain)
            } else {
                (uniform(&mut rng, cfg.score_range), 1.0)
            };
            let c = o.bbox.center();
            let cx = c.x + gaussian(&mut rng, cfg.center_noise * gain);
            let cy = c.y + gaussian(&mut rng, cfg.center_noise * gain);
            let w = o.bbox.w * (1.0 + gaussian(&mut rng, cfg.size_noise * gain)).max(0.1);
            let h = o.bbox.h * (1.0 + gaussian(&mut rng, cfg.size_noise * gain)).max(0.1);
            let bbox = if cx == c.x && cy == c.y && w == o.bbox.w && h == o.bbox.h {
                o.bbox
            } else {
                BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)?
            };
            let truth_obj = &truth.objects[o.object - 1];
            let embedding = if cfg.embedding_noise == 0.0 {
                truth_obj.embedding.clone()
            } else {
                let noisy: Vec<f64> =
                    truth_obj.embedding.iter().map(|v| v + gaussian(&mut rng, cfg.embedding_noise)).collect();
                let n = noisy.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                noisy.into_iter().map(|v| v / n).collect()
            };
            out.push(Detection {
                frame,
                id: if cfg.keep_ids { o.object as i64 } else { -1 },
                bbox,
                score,
                class: truth_obj.class,
                embedding: Some(embedding),
            });
        }
    }
    Ok(out)
}
