use super::{BBox, Track};
use crate::error::{Error, Result};

/// Outcome of [`smooth_box`].
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub track: Track,
    /// Frames that needed smoothing but had fewer than `k` boxes of history;
    /// they were passed through unchanged.
    pub insufficient_history: Vec<usize>,
}

/// Replaces boxes whose detector score is below `score_thresh` by the
/// unweighted moving average of the last `k` boxes of the track (the
/// current one included), computed corner-wise with the running update
/// `s_t = s_{t-1} + (x_t - x_{t-k}) / k`. Interpolated boxes and boxes with
/// enough score pass through.
pub fn smooth_box(track: &Track, score_thresh: f64, k: usize) -> Result<Smoothed> {
    if k == 0 {
        return Err(Error::invalid("moving-average window must be at least 1"));
    }
    let corners: Vec<[f64; 4]> = track.boxes.iter().map(|b| b.bbox.corners()).collect();
    let mut out = track.clone();
    let mut insufficient = Vec::new();
    // Running sum of the last k raw corner vectors.
    let mut sum = [0.0; 4];
    for (t, c) in corners.iter().enumerate() {
        for i in 0..4 {
            sum[i] += c[i];
            if t >= k {
                sum[i] -= corners[t - k][i];
            }
        }
        let low = matches!(track.boxes[t].score, Some(s) if s < score_thresh);
        if !low {
            continue;
        }
        if t + 1 < k {
            insufficient.push(track.boxes[t].frame);
            continue;
        }
        let m = sum.map(|v| v / k as f64);
        out.boxes[t].bbox = BBox::from_corners(m[0], m[1], m[2], m[3])?;
    }
    if !insufficient.is_empty() {
        log::debug!(
            "track {}: {} low-score boxes lack {k} frames of history",
            track.id,
            insufficient.len()
        );
    }
    Ok(Smoothed {
        track: out,
        insufficient_history: insufficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::TrackBox;
    use proptest::prelude::*;

    fn track(xs: &[f64], scores: &[f64]) -> Track {
        Track {
            id: 1,
            class: 0,
            boxes: xs
                .iter()
                .zip(scores)
                .enumerate()
                .map(|(t, (&x, &s))| TrackBox {
                    frame: t,
                    bbox: BBox::new(x, x, 10.0, 10.0).unwrap(),
                    score: Some(s),
                    embedding: None,
                })
                .collect(),
        }
    }

    #[test]
    fn recursion_worked_example() {
        // x = [0, 2, 4, 100], k = 2: s_3 = 3, s_4 = 3 + (100 - 2) / 2 = 52.
        let t = track(&[0.0, 2.0, 4.0, 100.0], &[0.9, 0.9, 0.9, 0.1]);
        let s = smooth_box(&t, 0.2, 2).unwrap();
        assert_eq!(s.track.boxes[3].bbox.x, 52.0);
        assert_eq!(s.track.boxes[2].bbox.x, 4.0);
        // Recursion evaluated literally.
        let x = [0.0, 2.0, 4.0, 100.0];
        let s3 = (x[1] + x[2]) / 2.0;
        assert_eq!(s3, 3.0);
        assert_eq!(s3 + (x[3] - x[1]) / 2.0, 52.0);
    }

    #[test]
    fn constant_boxes_unchanged() {
        let t = track(&[5.0; 8], &[0.1; 8]);
        let s = smooth_box(&t, 0.2, 3).unwrap();
        assert_eq!(s.track, t);
        assert_eq!(s.insufficient_history, vec![0, 1]);
    }

    #[test]
    fn short_history_passes_through() {
        let t = track(&[0.0, 9.0], &[0.1, 0.1]);
        let s = smooth_box(&t, 0.2, 5).unwrap();
        assert_eq!(s.track, t);
        assert_eq!(s.insufficient_history, vec![0, 1]);
    }

    proptest! {
        #[test]
        fn matches_windowed_mean_and_identity_elsewhere(
            xs in proptest::collection::vec(0.0f64..500.0, 1..40),
            scores_seed in proptest::collection::vec(0.0f64..1.0, 40),
            k in 1usize..8,
        ) {
            let scores = &scores_seed[..xs.len()];
            let t = track(&xs, scores);
            let s = smooth_box(&t, 0.2, k).unwrap();
            for (i, b) in s.track.boxes.iter().enumerate() {
                if scores[i] >= 0.2 || i + 1 < k {
                    prop_assert_eq!(b, &t.boxes[i]);
                } else {
                    let mean = xs[i + 1 - k..=i].iter().sum::<f64>() / k as f64;
                    prop_assert!((b.bbox.x - mean).abs() < 1e-9);
                }
            }
        }
    }
}
