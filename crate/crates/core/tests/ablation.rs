use skyloc_core::eval::*;
use skyloc_core::synth::{build_scene, SceneSpec};
use skyloc_core::Error;

fn run(pitch_deg: f64) -> AblationReport {
    let truth = build_scene(&SceneSpec { pitch_deg, ..SceneSpec::default() }).unwrap();
    ablation_run(&truth, &AblationConfig::default()).unwrap()
}

fn overall(r: &AblationReport, m: LocalizationMode) -> f64 {
    r.report(m).overall.mean.unwrap()
}

#[test]
fn pitched_scene_orders_the_three_modes() {
    let r = run(15.0);
    let [flat, est, trk] = LocalizationMode::ALL.map(|m| overall(&r, m));
    assert!(flat > est && est > trk, "{flat} > {est} > {trk}");
    // Relative gain of plane estimation per populated bucket; the far one gains most.
    let flat_b = &r.report(LocalizationMode::FlatGround).buckets;
    let est_b = &r.report(LocalizationMode::GroundEstimate).buckets;
    let gains: Vec<(usize, f64)> = flat_b
        .iter()
        .zip(est_b)
        .enumerate()
        .filter_map(|(i, (f, e))| Some((i, (f.mean? - e.mean?) / f.mean?)))
        .collect();
    let far = flat_b.len() - 1;
    let (best, _) = gains.iter().copied().fold((usize::MAX, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    assert!(gains.len() >= 2, "{gains:?}");
    assert_eq!(best, far, "{gains:?}");
    assert_eq!(r.table().lines().count(), 4);
    assert_eq!(r.csv().lines().count(), 1 + 3 * 4);
}

#[test]
fn level_camera_makes_flat_assumption_correct() {
    let r = run(0.0);
    let flat = overall(&r, LocalizationMode::FlatGround);
    let est = overall(&r, LocalizationMode::GroundEstimate);
    // Both carry the same detector noise; the plane estimate adds only a little.
    assert!((flat - est).abs() < 0.1 * flat, "{flat} vs {est}");
}

#[test]
fn scene_without_objects_has_no_report() {
    let mut truth = build_scene(&SceneSpec { frames: 10, ..SceneSpec::default() }).unwrap();
    truth.observations.iter_mut().for_each(Vec::clear);
    assert!(matches!(ablation_run(&truth, &AblationConfig::default()), Err(Error::EmptyReport(_))));
}

#[test]
fn ablation_is_deterministic() {
    let truth = build_scene(&SceneSpec { frames: 60, ..SceneSpec::default() }).unwrap();
    let a = ablation_run(&truth, &AblationConfig::default()).unwrap();
    let b = ablation_run(&truth, &AblationConfig::default()).unwrap();
    assert_eq!(a.csv(), b.csv());
}
