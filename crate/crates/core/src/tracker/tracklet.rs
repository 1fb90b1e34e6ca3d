use nalgebra::{Matrix3, Point2, Vector2, Vector3};

use super::{BBox, Detection};
use crate::error::{Error, Result};

/// Image motion from one frame to the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameMotion {
    Identity,
    /// Mean optical shift, pixels.
    Shift(Vector2<f64>),
    /// Homography induced by the ground plane.
    Homography(Matrix3<f64>),
}

impl FrameMotion {
    pub fn warp_box(&self, b: &BBox) -> BBox {
        match self {
            Self::Identity => *b,
            Self::Shift(s) => b.translated(s.x, s.y),
            Self::Homography(h) => b.warped(h).unwrap_or(*b),
        }
    }

    pub fn warp_point(&self, p: &Point2<f64>) -> Point2<f64> {
        match self {
            Self::Identity => *p,
            Self::Shift(s) => p + s,
            Self::Homography(h) => {
                let q = h * Vector3::new(p.x, p.y, 1.0);
                if q.z > 0.0 {
                    Point2::new(q.x / q.z, q.y / q.z)
                } else {
                    *p
                }
            }
        }
    }
}

/// Camera-motion compensation over a sequence: `steps[t]` maps frame `t` to
/// `t + 1`. Missing steps are treated as identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotionModel {
    pub steps: Vec<FrameMotion>,
}

impl MotionModel {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(steps: Vec<FrameMotion>) -> Self {
        Self { steps }
    }

    fn step(&self, t: usize) -> FrameMotion {
        self.steps.get(t).copied().unwrap_or(FrameMotion::Identity)
    }

    /// Forward warp of a box from frame `from` to frame `to >= from`.
    pub fn warp_box(&self, b: &BBox, from: usize, to: usize) -> BBox {
        (from..to).fold(*b, |acc, t| self.step(t).warp_box(&acc))
    }

    pub fn warp_point(&self, p: &Point2<f64>, from: usize, to: usize) -> Point2<f64> {
        (from..to).fold(*p, |acc, t| self.step(t).warp_point(&acc))
    }
}

/// Contiguous chain of detections of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: usize,
    pub class: i64,
    pub detections: Vec<Detection>,
}

impl Tracklet {
    pub fn start(&self) -> usize {
        self.detections[0].frame
    }

    pub fn end(&self) -> usize {
        self.detections[self.detections.len() - 1].frame
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn overlaps(&self, other: &Tracklet) -> bool {
        self.start() <= other.end() && other.start() <= self.end()
    }

    /// Mean embedding, if every detection carries one.
    pub fn mean_embedding(&self) -> Option<Vec<f64>> {
        let first = self.detections[0].embedding.as_ref()?;
        let mut acc = vec![0.0; first.len()];
        for d in &self.detections {
            let e = d.embedding.as_ref()?;
            if e.len() != acc.len() {
                return None;
            }
            for (a, v) in acc.iter_mut().zip(e) {
                *a += v;
            }
        }
        let n = self.detections.len() as f64;
        Some(acc.into_iter().map(|v| v / n).collect())
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Frame-to-frame association: each live tracklet's last box is warped into
/// the next frame and matched greedily by `IOU + appearance` among pairs of
/// the same class with compensated IOU at least `iou_thresh`. Unmatched
/// detections open new tracklets. Tracklet ids follow creation order.
pub fn generate_tracklets(
    frames: &[Vec<Detection>],
    motion: &MotionModel,
    iou_thresh: f64,
) -> Result<Vec<Tracklet>> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::invalid(format!("IOU threshold {iou_thresh} outside (0, 1)")));
    }
    let mut tracklets: Vec<Tracklet> = Vec::new();
    // Indices of tracklets that ended in the previous frame.
    let mut live: Vec<usize> = Vec::new();
    for (t, dets) in frames.iter().enumerate() {
        if let Some(d) = dets.iter().find(|d| d.frame != t) {
            return Err(Error::invalid(format!(
                "detection for frame {} listed under frame {t}",
                d.frame
            )));
        }
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (li, &ti) in live.iter().enumerate() {
            let tr = &tracklets[ti];
            let last = &tr.detections[tr.len() - 1];
            let predicted = motion.warp_box(&last.bbox, t - 1, t);
            for (j, d) in dets.iter().enumerate() {
                if d.class != tr.class {
                    continue;
                }
                let iou = predicted.iou(&d.bbox);
                if iou < iou_thresh {
                    continue;
                }
                let affinity = match (&last.embedding, &d.embedding) {
                    (Some(a), Some(b)) => 0.5 * iou + 0.5 * cosine_similarity(a, b).max(0.0),
                    _ => iou,
                };
                pairs.push((affinity, li, j));
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_track = vec![false; live.len()];
        let mut used_det = vec![false; dets.len()];
        let mut next_live = Vec::new();
        for (_, li, j) in pairs {
            if used_track[li] || used_det[j] {
                continue;
            }
            used_track[li] = true;
            used_det[j] = true;
            tracklets[live[li]].detections.push(dets[j].clone());
            next_live.push(live[li]);
        }
        for (j, d) in dets.iter().enumerate() {
            if !used_det[j] {
                next_live.push(tracklets.len());
                tracklets.push(Tracklet {
                    id: tracklets.len(),
                    class: d.class,
                    detections: vec![d.clone()],
                });
            }
        }
        next_live.sort_unstable();
        live = next_live;
    }
    Ok(tracklets)
}
