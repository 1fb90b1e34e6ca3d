use std::collections::BTreeMap;

use nalgebra::Point2;
use rayon::prelude::*;

use super::{cosine_similarity, BBox, MotionModel, Tracklet};
use crate::error::{Error, Result};

/// Weights and kernel widths of the connectivity surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectivityConfig {
    pub w_appearance: f64,
    pub w_motion: f64,
    pub w_gap: f64,
    /// Largest admissible gap between tracklets, frames.
    pub window: usize,
    /// Motion kernel width as a fraction of the box diagonal.
    pub motion_sigma: f64,
    /// Frames used to estimate a tracklet's velocity.
    pub velocity_frames: usize,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        Self {
            w_appearance: 0.5,
            w_motion: 0.4,
            w_gap: 0.1,
            window: 64,
            motion_sigma: 0.5,
            velocity_frames: 10,
        }
    }
}

impl ConnectivityConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_appearance, self.w_motion, self.w_gap];
        if w.iter().any(|v| *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("connectivity weights must be non-negative and sum to 1"));
        }
        if self.window == 0 || !(self.motion_sigma > 0.0) || self.velocity_frames == 0 {
            return Err(Error::invalid("connectivity window, kernel width and velocity span must be positive"));
        }
        Ok(())
    }
}

/// Likelihood that two temporally disjoint tracklets show the same object.
/// A learned pair classifier can be plugged in through this interface.
pub trait ConnectivityScorer: Sync {
    fn score(&self, a: &Tracklet, b: &Tracklet, motion: &MotionModel) -> Result<f64>;
}

/// Appearance + motion + gap surrogate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SurrogateScorer {
    pub cfg: ConnectivityConfig,
}

impl ConnectivityScorer for SurrogateScorer {
    fn score(&self, a: &Tracklet, b: &Tracklet, motion: &MotionModel) -> Result<f64> {
        connectivity(a, b, motion, &self.cfg)
    }
}

fn diagonal(b: &BBox) -> f64 {
    (b.w * b.w + b.h * b.h).sqrt()
}

/// Compensated per-frame image velocity at the end of a tracklet.
fn end_velocity(a: &Tracklet, motion: &MotionModel, frames: usize) -> nalgebra::Vector2<f64> {
    let n = a.len();
    let span = frames.min(n - 1);
    if span == 0 {
        return nalgebra::Vector2::zeros();
    }
    let first = &a.detections[n - 1 - span];
    let last = &a.detections[n - 1];
    let carried = motion.warp_point(&first.bbox.center(), first.frame, last.frame);
    (last.bbox.center() - carried) / span as f64
}

/// Connectivity of `a` (earlier) and `b` (later):
/// `w_app * max(0, cos) + w_mot * motion kernel + w_gap * (1 - (gap - 1) / window)`.
/// Zero beyond the window or across classes.
pub fn connectivity(a: &Tracklet, b: &Tracklet, motion: &MotionModel, cfg: &ConnectivityConfig) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidPair("empty tracklet".into()));
    }
    if a.overlaps(b) {
        return Err(Error::InvalidPair(format!(
            "tracklets {} [{}, {}] and {} [{}, {}] overlap in time",
            a.id,
            a.start(),
            a.end(),
            b.id,
            b.start(),
            b.end()
        )));
    }
    if a.start() > b.start() {
        return Err(Error::InvalidPair(format!("tracklet {} must precede {}", a.id, b.id)));
    }
    let gap = b.start() - a.end();
    if gap > cfg.window || a.class != b.class {
        return Ok(0.0);
    }
    let last = &a.detections[a.len() - 1];
    let first = &b.detections[0];
    let v = end_velocity(a, motion, cfg.velocity_frames);
    let predicted: Point2<f64> = motion.warp_point(&last.bbox.center(), a.end(), b.start()) + v * gap as f64;
    let scale = 0.5 * (diagonal(&last.bbox) + diagonal(&first.bbox));
    let sigma = cfg.motion_sigma * scale * (1.0 + 0.1 * (gap as f64).sqrt());
    let r = (predicted - first.bbox.center()).norm();
    let motion_term = (-0.5 * (r / sigma).powi(2)).exp();
    let gap_term = 1.0 - (gap as f64 - 1.0) / cfg.window as f64;

    let (wa, wm, wg) = (cfg.w_appearance, cfg.w_motion, cfg.w_gap);
    let l = match (a.mean_embedding(), b.mean_embedding()) {
        (Some(ea), Some(eb)) => wa * cosine_similarity(&ea, &eb).max(0.0) + wm * motion_term + wg * gap_term,
        // No appearance cue: renormalize over the remaining terms.
        _ if wm + wg > 0.0 => (wm * motion_term + wg * gap_term) / (wm + wg),
        _ => 0.0,
    };
    Ok(l.clamp(0.0, 1.0))
}

/// Tracklets with connectivity edges between admissible pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackGraph {
    pub tracklets: Vec<Tracklet>,
    /// `(earlier, later, likelihood)`; only likelihoods above zero are kept.
    pub edges: Vec<(usize, usize, f64)>,
}

impl TrackGraph {
    /// Scores every temporally disjoint pair within `window`.
    pub fn build(
        tracklets: Vec<Tracklet>,
        scorer: &dyn ConnectivityScorer,
        motion: &MotionModel,
        window: usize,
    ) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, a) in tracklets.iter().enumerate() {
            for (j, b) in tracklets.iter().enumerate() {
                if a.end() < b.start() && b.start() - a.end() <= window && a.class == b.class {
                    pairs.push((i, j));
                }
            }
        }
        let edges: Vec<(usize, usize, f64)> = pairs
            .par_iter()
            .map(|&(i, j)| scorer.score(&tracklets[i], &tracklets[j], motion).map(|l| (i, j, l)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|e| e.2 > 0.0)
            .collect();
        Ok(Self { tracklets, edges })
    }
}

/// Edge weight kept strictly inside (0, 1) so log-costs stay finite.
fn clamp_likelihood(l: f64) -> f64 {
    l.clamp(1e-12, 1.0 - 1e-12)
}

/// Total clustering cost: `-log l` over intra-cluster edges plus
/// `-log(1 - l)` over cut edges.
pub fn clustering_cost(g: &TrackGraph, labels: &[usize]) -> f64 {
    g.edges
        .iter()
        .map(|&(i, j, l)| {
            let l = clamp_likelihood(l);
            if labels[i] == labels[j] {
                -l.ln()
            } else {
                -(1.0 - l).ln()
            }
        })
        .sum()
}

/// Greedy agglomerative clustering. Returns one cluster label per tracklet
/// (labels are the smallest member index) and the cost after each accepted
/// merge, starting with the all-singletons cost.
pub fn cluster_labels(g: &TrackGraph, merge_threshold: f64) -> (Vec<usize>, Vec<f64>) {
    let n = g.tracklets.len();
    let mut label: Vec<usize> = (0..n).collect();
    let mut history = vec![clustering_cost(g, &label)];
    let mut edges: Vec<(usize, usize, f64)> =
        g.edges.iter().copied().filter(|e| e.2 > merge_threshold).collect();
    edges.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    // Frames covered by each cluster, for the overlap check.
    let spans: Vec<(usize, usize)> = g.tracklets.iter().map(|t| (t.start(), t.end())).collect();
    loop {
        let mut merged = false;
        for &(i, j, _) in &edges {
            let (ci, cj) = (label[i], label[j]);
            if ci == cj {
                continue;
            }
            let members_i: Vec<usize> = (0..n).filter(|&m| label[m] == ci).collect();
            let members_j: Vec<usize> = (0..n).filter(|&m| label[m] == cj).collect();
            let overlap = members_i.iter().any(|&a| {
                members_j
                    .iter()
                    .any(|&b| spans[a].0 <= spans[b].1 && spans[b].0 <= spans[a].1)
            });
            if overlap {
                continue;
            }
            let delta: f64 = g
                .edges
                .iter()
                .filter(|&&(a, b, _)| {
                    (label[a] == ci && label[b] == cj) || (label[a] == cj && label[b] == ci)
                })
                .map(|&(_, _, l)| {
                    let l = clamp_likelihood(l);
                    ((1.0 - l) / l).ln()
                })
                .sum();
            if delta > 0.0 {
                continue;
            }
            let (keep, drop) = (ci.min(cj), ci.max(cj));
            for l in label.iter_mut() {
                if *l == drop {
                    *l = keep;
                }
            }
            history.push(clustering_cost(g, &label));
            merged = true;
            // Restart from the strongest edge with the new clusters.
            break;
        }
        if !merged {
            return (label, history);
        }
    }
}

/// One box of a final track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackBox {
    pub frame: usize,
    pub bbox: BBox,
    /// Detector score; `None` for boxes interpolated across gaps.
    pub score: Option<f64>,
    pub embedding: Option<Vec<f64>>,
}

impl TrackBox {
    pub fn interpolated(&self) -> bool {
        self.score.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    pub class: i64,
    pub boxes: Vec<TrackBox>,
}

impl Track {
    pub fn box_at(&self, frame: usize) -> Option<&TrackBox> {
        self.boxes
            .binary_search_by_key(&frame, |b| b.frame)
            .ok()
            .map(|i| &self.boxes[i])
    }
}

/// Merges a cluster's tracklets into one track, interpolating boxes linearly
/// across gaps.
fn assemble(id: usize, members: &[&Tracklet]) -> Track {
    let mut boxes: Vec<TrackBox> = Vec::new();
    for t in members {
        for d in &t.detections {
            if let Some(prev) = boxes.last().cloned() {
                let gap = d.frame - prev.frame;
                for s in 1..gap {
                    boxes.push(TrackBox {
                        frame: prev.frame + s,
                        bbox: prev.bbox.lerp(&d.bbox, s as f64 / gap as f64),
                        score: None,
                        embedding: None,
                    });
                }
            }
            boxes.push(TrackBox {
                frame: d.frame,
                bbox: d.bbox,
                score: Some(d.score),
                embedding: d.embedding.clone(),
            });
        }
    }
    Track {
        id,
        class: members[0].class,
        boxes,
    }
}

/// Clusters the graph and turns each cluster into a track. Track ids start at
/// 1 in order of first appearance.
pub fn cluster_graph(g: &TrackGraph, merge_threshold: f64) -> Vec<Track> {
    let (labels, _) = cluster_labels(g, merge_threshold);
    let mut clusters: BTreeMap<usize, Vec<&Tracklet>> = BTreeMap::new();
    for (t, &l) in g.tracklets.iter().zip(&labels) {
        clusters.entry(l).or_default().push(t);
    }
    let mut groups: Vec<Vec<&Tracklet>> = clusters.into_values().collect();
    for g in &mut groups {
        g.sort_by_key(|t| (t.start(), t.id));
    }
    groups.sort_by_key(|g| (g[0].start(), g[0].id));
    groups
        .iter()
        .enumerate()
        .map(|(i, members)| assemble(i + 1, members))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Detection;

    fn tracklet(id: usize, frames: std::ops::Range<usize>, x0: f64, vx: f64, emb: &[f64]) -> Tracklet {
        Tracklet {
            id,
            class: 1,
            detections: frames
                .map(|t| {
                    let mut d = Detection::new(t, BBox::new(x0 + vx * t as f64, 100.0, 40.0, 40.0).unwrap(), 0.9, 1)
                        .unwrap();
                    d.embedding = Some(emb.to_vec());
                    d
                })
                .collect(),
        }
    }

    #[test]
    fn split_continuation_scores_high() {
        let a = tracklet(0, 0..20, 10.0, 3.0, &[1.0, 0.2, 0.1]);
        let b = tracklet(1, 26..50, 10.0, 3.0, &[1.0, 0.21, 0.1]);
        let l = connectivity(&a, &b, &MotionModel::identity(), &ConnectivityConfig::default()).unwrap();
        assert!(l > 0.8, "{l}");
    }

    #[test]
    fn unrelated_objects_score_low() {
        let a = tracklet(0, 0..20, 100.0, 3.0, &[1.0, 0.0]);
        let b = tracklet(1, 22..40, 300.0 + 66.0, -3.0, &[0.0, 1.0]);
        let l = connectivity(&a, &b, &MotionModel::identity(), &ConnectivityConfig::default()).unwrap();
        assert!(l < 0.2, "{l}");
    }

    #[test]
    fn overlap_is_invalid_and_far_gap_is_zero() {
        let a = tracklet(0, 0..20, 0.0, 0.0, &[1.0]);
        let b = tracklet(1, 10..30, 0.0, 0.0, &[1.0]);
        let cfg = ConnectivityConfig::default();
        assert!(matches!(
            connectivity(&a, &b, &MotionModel::identity(), &cfg),
            Err(Error::InvalidPair(_))
        ));
        let c = tracklet(2, 100..110, 0.0, 0.0, &[1.0]);
        assert_eq!(connectivity(&a, &c, &MotionModel::identity(), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn embedding_scale_invariance() {
        let a = tracklet(0, 0..10, 10.0, 2.0, &[0.3, 0.5, 0.2]);
        let b = tracklet(1, 15..25, 10.0, 2.0, &[0.35, 0.45, 0.2]);
        let scale = |t: &Tracklet, s: f64| {
            let mut t = t.clone();
            for d in &mut t.detections {
                d.embedding = d.embedding.as_ref().map(|e| e.iter().map(|v| v * s).collect());
            }
            t
        };
        let cfg = ConnectivityConfig::default();
        let m = MotionModel::identity();
        let l1 = connectivity(&a, &b, &m, &cfg).unwrap();
        let l2 = connectivity(&scale(&a, 7.5), &scale(&b, 7.5), &m, &cfg).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn two_tracklets_merge_with_interpolated_gap() {
        let a = tracklet(0, 0..5, 0.0, 2.0, &[1.0]);
        let b = tracklet(1, 8..12, 0.0, 2.0, &[1.0]);
        let g = TrackGraph {
            tracklets: vec![a, b],
            edges: vec![(0, 1, 0.9)],
        };
        let tracks = cluster_graph(&g, 0.5);
        assert_eq!(tracks.len(), 1);
        let t = &tracks[0];
        assert_eq!(t.boxes.len(), 12);
        assert!(t.boxes[5].interpolated() && t.boxes[6].interpolated());
        assert!((t.boxes[6].bbox.x - 12.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_graph_is_identity() {
        let g = TrackGraph {
            tracklets: vec![tracklet(0, 0..5, 0.0, 0.0, &[1.0]), tracklet(1, 8..12, 50.0, 0.0, &[1.0])],
            edges: vec![],
        };
        let tracks = cluster_graph(&g, 0.5);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].boxes.len(), 5);
        assert_eq!(tracks[1].boxes.len(), 4);
    }

    #[test]
    fn cost_never_increases_and_result_is_fixed_point() {
        let ts: Vec<Tracklet> = (0..6).map(|i| tracklet(i, (i * 10)..(i * 10 + 8), 0.0, 0.0, &[1.0])).collect();
        let edges = vec![(0, 1, 0.9), (1, 2, 0.7), (0, 2, 0.3), (2, 3, 0.55), (3, 4, 0.95), (1, 3, 0.1), (4, 5, 0.2)];
        let g = TrackGraph { tracklets: ts, edges };
        let (labels, history) = cluster_labels(&g, 0.5);
        assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        // No admissible merge left above threshold with non-positive delta.
        for &(i, j, l) in &g.edges {
            if l > 0.5 && labels[i] != labels[j] {
                let delta: f64 = g
                    .edges
                    .iter()
                    .filter(|&&(a, b, _)| {
                        (labels[a] == labels[i] && labels[b] == labels[j])
                            || (labels[a] == labels[j] && labels[b] == labels[i])
                    })
                    .map(|&(_, _, l)| ((1.0 - l) / l).ln())
                    .sum();
                assert!(delta > 0.0);
            }
        }
    }
}
