use std::collections::BTreeSet;
use std::time::Instant;

use skyloc_core::eval::{frame_assignments, mot_metrics};
use skyloc_core::synth::{build_scene, corrupt_detections, CorruptionConfig, Occlusion, ScenarioTruth, SceneSpec};
use skyloc_core::tracker::*;

fn scene(frames: usize, seed: u64) -> ScenarioTruth {
    build_scene(&SceneSpec { frames, seed, ..SceneSpec::default() }).unwrap()
}

fn track(dets: &[Detection]) -> Vec<Detection> {
    tracks_to_detections(&track_pipeline(dets, &MotionModel::identity(), &TrackerConfig::default()).unwrap())
}

/// Hypothesis ids matched to truth object `id` over the whole sequence.
fn ids_for(hyp: &[Detection], truth: &[Detection], id: i64) -> BTreeSet<i64> {
    frame_assignments(hyp, truth)
        .unwrap()
        .iter()
        .flat_map(|a| a.matches.iter().filter(|(t, _)| *t == id).map(|(_, h)| *h).collect::<Vec<_>>())
        .collect()
}

#[test]
fn noiseless_scene_is_tracked_perfectly() {
    let truth = scene(300, 7);
    let start = Instant::now();
    let hyp = track(&corrupt_detections(&truth, &CorruptionConfig::none()).unwrap());
    let elapsed = start.elapsed();
    let m = mot_metrics(&hyp, &truth.detections()).unwrap();
    assert_eq!((m.mota, m.idf1, m.id_switches), (1.0, 1.0, 0));
    assert_eq!((m.mostly_tracked, m.mostly_lost), (5, 0));
    assert!(elapsed.as_secs_f64() < 10.0, "{elapsed:?}");
}

#[test]
fn identity_survives_28_frame_occlusion() {
    for seed in [7, 8, 9] {
        let truth = scene(120, seed);
        let cfg = CorruptionConfig {
            occlusions: vec![Occlusion { object: 3, start: 12, end: 39 }],
            ..CorruptionConfig::none()
        };
        let dets = corrupt_detections(&truth, &cfg).unwrap();
        assert!(dets.iter().all(|d| d.frame < 12 || d.frame > 39 || dets.iter().filter(|e| e.frame == d.frame).count() == 4));
        let hyp = track(&dets);
        let gt = truth.detections();
        assert_eq!(ids_for(&hyp, &gt, 3).len(), 1, "seed {seed}");
        let switches: usize = frame_assignments(&hyp, &gt)
            .unwrap()
            .iter()
            .map(|a| a.switches.iter().filter(|t| **t == 3).count())
            .sum();
        assert_eq!(switches, 0);
        // The gap is bridged by interpolation.
        let m = mot_metrics(&hyp, &gt).unwrap();
        assert_eq!(m.id_switches, 0);
        assert_eq!(m.false_positives, 0);
    }
}

#[test]
fn occlusion_with_noisy_detections() {
    let truth = scene(120, 7);
    let cfg = CorruptionConfig {
        center_noise: 0.5,
        size_noise: 0.01,
        embedding_noise: 0.05,
        occlusions: vec![Occlusion { object: 3, start: 12, end: 39 }],
        seed: 4,
        ..CorruptionConfig::none()
    };
    let hyp = track(&corrupt_detections(&truth, &cfg).unwrap());
    let gt = truth.detections();
    assert_eq!(ids_for(&hyp, &gt, 3).len(), 1);
    assert_eq!(mot_metrics(&hyp, &gt).unwrap().id_switches, 0);
}

#[test]
fn missed_detections_are_bridged() {
    let truth = scene(150, 5);
    let cfg = CorruptionConfig { miss_prob: 0.1, seed: 21, ..CorruptionConfig::none() };
    let dets = corrupt_detections(&truth, &cfg).unwrap();
    let hyp = track(&dets);
    let gt = truth.detections();
    let m = mot_metrics(&hyp, &gt).unwrap();
    assert_eq!(m.id_switches, 0);
    for id in 1..=5 {
        assert_eq!(ids_for(&hyp, &gt, id).len(), 1, "object {id}");
    }
    // Interpolation recovers more boxes than were detected.
    assert!(m.false_negatives < gt.len() - dets.len());
}

#[test]
fn output_is_deterministic() {
    let truth = scene(100, 2);
    let cfg = CorruptionConfig { center_noise: 1.0, miss_prob: 0.05, low_score_prob: 0.2, seed: 3, ..CorruptionConfig::none() };
    let dets = corrupt_detections(&truth, &cfg).unwrap();
    let run = || write_tracks(&track_pipeline(&dets, &MotionModel::identity(), &TrackerConfig::default()).unwrap());
    assert_eq!(run(), run());
}

#[test]
fn detection_file_round_trip_feeds_the_tracker() {
    let truth = scene(60, 1);
    let dets = corrupt_detections(&truth, &CorruptionConfig::none()).unwrap();
    let parsed = read_detections(&write_detections(&dets)).unwrap();
    assert_eq!(parsed, dets);
    assert_eq!(track(&parsed), track(&dets));
    assert!(track(&[]).is_empty());
}
