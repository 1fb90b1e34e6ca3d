use std::fmt::Write as _;

use super::{
    cluster_graph, generate_tracklets, group_by_frame, smooth_box, ConnectivityConfig, Detection,
    MotionModel, SurrogateScorer, Track, TrackGraph,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub iou_thresh: f64,
    pub connectivity: ConnectivityConfig,
    /// Minimum edge likelihood for a merge.
    pub merge_threshold: f64,
    pub score_thresh: f64,
    pub smooth_k: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_thresh: 0.3,
            connectivity: ConnectivityConfig::default(),
            merge_threshold: 0.5,
            score_thresh: 0.2,
            smooth_k: 5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_thresh > 0.0 && self.iou_thresh < 1.0) {
            return Err(Error::invalid("iou threshold must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.merge_threshold) {
            return Err(Error::invalid("merge threshold must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.score_thresh) {
            return Err(Error::invalid("score threshold must lie in [0, 1]"));
        }
        if self.smooth_k == 0 {
            return Err(Error::invalid("smoothing window must be at least 1"));
        }
        self.connectivity.validate()
    }
}

/// Tracklets, connectivity graph, clustering and low-score smoothing.
pub fn track_pipeline(dets: &[Detection], motion: &MotionModel, cfg: &TrackerConfig) -> Result<Vec<Track>> {
    cfg.validate()?;
    let Some(last) = dets.iter().map(|d| d.frame).max() else {
        return Ok(Vec::new());
    };
    let frames = group_by_frame(dets, last + 1);
    let tracklets = generate_tracklets(&frames, motion, cfg.iou_thresh).map_err(|e| e.in_stage("tracklets"))?;
    let scorer = SurrogateScorer {
        cfg: cfg.connectivity,
    };
    let graph = TrackGraph::build(tracklets, &scorer, motion, cfg.connectivity.window)
        .map_err(|e| e.in_stage("connectivity"))?;
    log::debug!("{} tracklets, {} edges", graph.tracklets.len(), graph.edges.len());
    cluster_graph(&graph, cfg.merge_threshold)
        .iter()
        .map(|t| smooth_box(t, cfg.score_thresh, cfg.smooth_k).map(|s| s.track))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("smoothing"))
}

/// Track CSV rows `frame,id,x,y,w,h,score,class` ordered by frame then id.
/// Interpolated boxes carry score `-1`.
pub fn write_tracks(tracks: &[Track]) -> String {
    let mut rows: Vec<(usize, usize, String)> = Vec::new();
    for t in tracks {
        for b in &t.boxes {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                b.frame,
                t.id,
                b.bbox.x,
                b.bbox.y,
                b.bbox.w,
                b.bbox.h,
                b.score.unwrap_or(-1.0),
                t.class
            );
            rows.push((b.frame, t.id, s));
        }
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    rows.into_iter().map(|r| r.2).collect()
}

/// Track boxes as identity-labelled detections (for evaluation).
pub fn tracks_to_detections(tracks: &[Track]) -> Vec<Detection> {
    let mut out = Vec::new();
    for t in tracks {
        for b in &t.boxes {
            out.push(Detection {
                frame: b.frame,
                id: t.id as i64,
                bbox: b.bbox,
                score: b.score.unwrap_or(-1.0),
                class: t.class,
                embedding: b.embedding.clone(),
            });
        }
    }
    out.sort_by(|a, b| (a.frame, a.id).cmp(&(b.frame, b.id)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{read_detections, BBox};

    #[test]
    fn empty_input() {
        assert!(track_pipeline(&[], &MotionModel::identity(), &TrackerConfig::default())
            .unwrap()
            .is_empty());
        assert_eq!(write_tracks(&[]), "");
    }

    #[test]
    fn occluded_object_keeps_identity() {
        // Object 1 hidden during frames 12..=39; object 2 always visible.
        let mut dets = Vec::new();
        for t in 0..60usize {
            let mut a = Detection::new(t, BBox::new(20.0 + 2.0 * t as f64, 50.0, 30.0, 30.0).unwrap(), 0.9, 0).unwrap();
            a.embedding = Some(vec![1.0, 0.1, 0.0]);
            let mut b = Detection::new(t, BBox::new(300.0 - 1.5 * t as f64, 200.0, 30.0, 30.0).unwrap(), 0.9, 0).unwrap();
            b.embedding = Some(vec![0.0, 0.1, 1.0]);
            if !(12..=39).contains(&t) {
                dets.push(a);
            }
            dets.push(b);
        }
        let tracks = track_pipeline(&dets, &MotionModel::identity(), &TrackerConfig::default()).unwrap();
        assert_eq!(tracks.len(), 2);
        let a = tracks.iter().find(|t| t.boxes[0].bbox.x < 100.0).unwrap();
        assert_eq!(a.boxes.len(), 60);
        assert_eq!(a.boxes.iter().filter(|b| b.interpolated()).count(), 28);
    }

    #[test]
    fn csv_output_parses_back() {
        let dets: Vec<Detection> = (0..5)
            .map(|t| Detection::new(t, BBox::new(10.0, 10.0, 20.0, 20.0).unwrap(), 0.9, 2).unwrap())
            .collect();
        let tracks = track_pipeline(&dets, &MotionModel::identity(), &TrackerConfig::default()).unwrap();
        let text = write_tracks(&tracks);
        let back = read_detections(&text).unwrap();
        assert_eq!(back.len(), 5);
        assert!(back.iter().all(|d| d.id == 1 && d.class == 2));
    }
}
