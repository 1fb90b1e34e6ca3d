use std::collections::{BTreeMap, HashMap, HashSet};

use super::hungarian;
use crate::error::{Error, Result};
use crate::tracker::Detection;

/// Minimum box overlap for a hypothesis to count as a truth match.
pub const MATCH_IOU: f64 = 0.5;
/// Coverage above which a truth trajectory is mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage at or below which a truth trajectory is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

/// One-to-one truth/hypothesis matching in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAssignment {
    pub frame: usize,
    /// `(truth id, hypothesis id)` pairs.
    pub matches: Vec<(i64, i64)>,
    pub unmatched_truth: Vec<i64>,
    pub unmatched_hyp: Vec<i64>,
    /// Truth ids whose matched hypothesis changed in this frame.
    pub switches: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotMetrics {
    pub mota: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    /// Truth trajectories covered for at least 80% of their frames.
    pub mostly_tracked: usize,
    /// Truth trajectories covered for at most 20% of their frames.
    pub mostly_lost: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub truth_boxes: usize,
    pub hyp_boxes: usize,
    pub truth_tracks: usize,
}

type Frames<'a> = BTreeMap<usize, Vec<&'a Detection>>;

fn by_frame<'a>(dets: &'a [Detection], what: &str) -> Result<Frames<'a>> {
    let mut out: Frames = BTreeMap::new();
    for d in dets {
        out.entry(d.frame).or_default().push(d);
    }
    for (f, v) in out.iter_mut() {
        v.sort_by_key(|d| d.id);
        if v.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::invalid(format!("{what}: duplicate id in frame {f}")));
        }
    }
    Ok(out)
}

/// Per-frame CLEAR-MOT assignment. Matches from the previous frame are kept
/// while they still overlap enough; the rest is assigned optimally on
/// `1 - IOU`.
pub fn frame_assignments(hyp: &[Detection], truth: &[Detection]) -> Result<Vec<FrameAssignment>> {
    let hf = by_frame(hyp, "hypothesis")?;
    let tf = by_frame(truth, "truth")?;
    let frames: Vec<usize> = hf.keys().chain(tf.keys()).copied().collect::<HashSet<_>>().into_iter().collect();
    let mut frames = frames;
    frames.sort_unstable();
    let empty = Vec::new();
    let mut last: HashMap<i64, i64> = HashMap::new();
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let ts = tf.get(&f).unwrap_or(&empty);
        let hs = hf.get(&f).unwrap_or(&empty);
        let mut t_used = vec![false; ts.len()];
        let mut h_used = vec![false; hs.len()];
        let mut pairs = Vec::new();
        for (i, t) in ts.iter().enumerate() {
            let Some(prev) = last.get(&t.id) else { continue };
            if let Some(j) = hs.iter().position(|h| h.id == *prev) {
                if !h_used[j] && t.bbox.iou(&hs[j].bbox) >= MATCH_IOU {
                    t_used[i] = true;
                    h_used[j] = true;
                    pairs.push((i, j));
                }
            }
        }
        let ti: Vec<usize> = (0..ts.len()).filter(|i| !t_used[*i]).collect();
        let hj: Vec<usize> = (0..hs.len()).filter(|j| !h_used[*j]).collect();
        let cost: Vec<Vec<f64>> = ti
            .iter()
            .map(|&i| {
                hj.iter()
                    .map(|&j| {
                        let iou = ts[i].bbox.iou(&hs[j].bbox);
                        if iou >= MATCH_IOU {
                            1.0 - iou
                        } else {
                            1e6
                        }
                    })
                    .collect()
            })
            .collect();
        for (a, b) in hungarian(&cost).into_iter().enumerate() {
            if let Some(b) = b {
                if cost[a][b] < 1e6 {
                    let (i, j) = (ti[a], hj[b]);
                    t_used[i] = true;
                    h_used[j] = true;
                    pairs.push((i, j));
                }
            }
        }
        pairs.sort_unstable();
        let mut switches = Vec::new();
        let matches = pairs
            .iter()
            .map(|&(i, j)| {
                let (t, h) = (ts[i].id, hs[j].id);
                if let Some(prev) = last.insert(t, h) {
                    if prev != h {
                        switches.push(t);
                    }
                }
                (t, h)
            })
            .collect();
        out.push(FrameAssignment {
            frame: f,
            matches,
            unmatched_truth: (0..ts.len()).filter(|i| !t_used[*i]).map(|i| ts[i].id).collect(),
            unmatched_hyp: (0..hs.len()).filter(|j| !h_used[*j]).map(|j| hs[j].id).collect(),
            switches,
        });
    }
    Ok(out)
}

/// Frames in which each (truth id, hypothesis id) pair overlaps by at least
/// [`MATCH_IOU`].
pub fn identity_overlaps(hyp: &[Detection], truth: &[Detection]) -> Result<BTreeMap<(i64, i64), usize>> {
    let hf = by_frame(hyp, "hypothesis")?;
    let tf = by_frame(truth, "truth")?;
    let mut counts = BTreeMap::new();
    for (f, ts) in &tf {
        let Some(hs) = hf.get(f) else { continue };
        for t in ts {
            for h in hs {
                if t.bbox.iou(&h.bbox) >= MATCH_IOU {
                    *counts.entry((t.id, h.id)).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Identity true positives under the optimal one-to-one identity matching.
pub fn identity_true_positives(counts: &BTreeMap<(i64, i64), usize>) -> usize {
    let tids: Vec<i64> = counts.keys().map(|k| k.0).collect::<HashSet<_>>().into_iter().collect();
    let hids: Vec<i64> = counts.keys().map(|k| k.1).collect::<HashSet<_>>().into_iter().collect();
    let cost: Vec<Vec<f64>> = tids
        .iter()
        .map(|t| hids.iter().map(|h| -(*counts.get(&(*t, *h)).unwrap_or(&0) as f64)).collect())
        .collect();
    hungarian(&cost)
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| counts.get(&(tids[i], hids[j])).copied().unwrap_or(0)))
        .sum()
}

/// CLEAR-MOT and identity metrics. Classes are ignored.
pub fn mot_metrics(hyp: &[Detection], truth: &[Detection]) -> Result<MotMetrics> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetrics("ground truth is empty".into()));
    }
    let frames = frame_assignments(hyp, truth)?;
    let (mut fp, mut fn_, mut idsw) = (0, 0, 0);
    let mut covered: HashMap<i64, usize> = HashMap::new();
    for a in &frames {
        fp += a.unmatched_hyp.len();
        fn_ += a.unmatched_truth.len();
        idsw += a.switches.len();
        for (t, _) in &a.matches {
            *covered.entry(*t).or_insert(0) += 1;
        }
    }
    let mut length: HashMap<i64, usize> = HashMap::new();
    for t in truth {
        *length.entry(t.id).or_insert(0) += 1;
    }
    let (mut mt, mut ml) = (0, 0);
    for (id, n) in &length {
        let ratio = *covered.get(id).unwrap_or(&0) as f64 / *n as f64;
        if ratio >= MOSTLY_TRACKED {
            mt += 1;
        } else if ratio <= MOSTLY_LOST {
            ml += 1;
        }
    }
    let idtp = identity_true_positives(&identity_overlaps(hyp, truth)?) as f64;
    let (nt, nh) = (truth.len() as f64, hyp.len() as f64);
    Ok(MotMetrics {
        mota: 1.0 - (fp + fn_ + idsw) as f64 / nt,
        idf1: 2.0 * idtp / (nt + nh),
        idp: if nh > 0.0 { idtp / nh } else { 0.0 },
        idr: idtp / nt,
        mostly_tracked: mt,
        mostly_lost: ml,
        false_positives: fp,
        false_negatives: fn_,
        id_switches: idsw,
        truth_boxes: truth.len(),
        hyp_boxes: hyp.len(),
        truth_tracks: length.len(),
    })
}
