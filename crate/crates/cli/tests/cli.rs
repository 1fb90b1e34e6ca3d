use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_SCENE: &str = "[scene]\nframes = 60\n";

fn skyloc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyloc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn failed(out: &Output, code: i32) -> String {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Simulated 60-frame bundle in `dir/bundle`.
fn bundle(dir: &Path, extra: &[&str]) -> PathBuf {
    fs::write(dir.join("small.cfg"), SMALL_SCENE).unwrap();
    let mut args = vec!["simulate", "--spec", "small.cfg", "--out", "bundle"];
    args.extend_from_slice(extra);
    ok(&skyloc(&args, dir));
    dir.join("bundle")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn frame_ids(rows: &[Vec<String>]) -> BTreeSet<(usize, i64)> {
    rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect()
}

/// Overall mean error of the single method in a localization report CSV.
fn overall_error(path: &Path) -> f64 {
    let rows = csv_rows(path);
    let row = rows.iter().find(|r| r[1] == "overall").expect("overall row");
    row[3].parse().unwrap()
}

fn output_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn missing_spec_names_path_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let err = failed(&skyloc(&["simulate", "--spec", "absent/scene.cfg", "--out", "run"], tmp.path()), 2);
    assert!(err.contains("absent/scene.cfg"), "{err}");
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn malformed_detection_row_names_line() {
    let tmp = TempDir::new().unwrap();
    let b = bundle(tmp.path(), &[]);
    let good: Vec<String> = fs::read_to_string(b.join("detections.csv")).unwrap().lines().take(2).map(str::to_string).collect();
    fs::write(tmp.path().join("bad.csv"), format!("{}\n{}\n1,2,oops\n", good[0], good[1])).unwrap();
    let err = failed(&skyloc(&["track", "--detections", "bad.csv", "--out", "run"], tmp.path()), 3);
    assert!(err.contains("bad.csv") && err.contains("line 3"), "{err}");
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn empty_detections_give_empty_tracks() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("empty.csv"), "").unwrap();
    ok(&skyloc(&["track", "--detections", "empty.csv", "--out", "run"], tmp.path()));
    assert_eq!(fs::read(tmp.path().join("run/tracks.csv")).unwrap(), b"");
    assert!(tmp.path().join("run/manifest.json").exists());
}

#[test]
fn unknown_config_key_names_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "[tracker]\niou_thresh = 0.3\nbogus = 1\n").unwrap();
    fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let err = failed(&skyloc(&["--config", "run.cfg", "track", "--detections", "empty.csv", "--out", "run"], tmp.path()), 2);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
}

#[test]
fn evaluate_without_truth_fails() {
    let tmp = TempDir::new().unwrap();
    let b = bundle(tmp.path(), &[]);
    let tracks = b.join("truth_detections.csv");
    let out = skyloc(
        &["evaluate", "--tracks", tracks.to_str().unwrap(), "--truth", "absent.csv", "--out", "run"],
        tmp.path(),
    );
    let err = failed(&out, 3);
    assert!(err.contains("absent.csv"), "{err}");
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn perfect_tracks_score_one() {
    let tmp = TempDir::new().unwrap();
    bundle(tmp.path(), &[]);
    let stdout = ok(&skyloc(
        &["evaluate", "--bundle", "bundle", "--tracks", "bundle/truth_detections.csv", "--out", "run"],
        tmp.path(),
    ));
    assert!(stdout.contains("1.0000   1.0000"), "{stdout}");
    let rows = csv_rows(&tmp.path().join("run/mot.csv"));
    assert_eq!(rows[1][0], "1");
    assert_eq!(rows[1][8], "0");
}

#[test]
fn localize_writes_one_row_per_track_box() {
    let tmp = TempDir::new().unwrap();
    bundle(tmp.path(), &[]);
    ok(&skyloc(&["track", "--bundle", "bundle", "--out", "trk"], tmp.path()));
    ok(&skyloc(&["localize", "--bundle", "bundle", "--tracks", "trk/tracks.csv", "--out", "loc"], tmp.path()));
    let tracks = csv_rows(&tmp.path().join("trk/tracks.csv"));
    let locs = csv_rows(&tmp.path().join("loc/localization.csv"));
    assert_eq!(locs[0].join(","), "frame,track_id,x,y,z,distance_m");
    assert_eq!(locs.len() - 1, tracks.len());
    assert_eq!(frame_ids(&locs[1..]), frame_ids(&tracks));
}

#[test]
fn flat_ground_is_worse_on_tilted_scene() {
    let tmp = TempDir::new().unwrap();
    bundle(tmp.path(), &[]);
    let truth = "bundle/truth_detections.csv";
    ok(&skyloc(&["localize", "--bundle", "bundle", "--tracks", truth, "--out", "est"], tmp.path()));
    ok(&skyloc(&["localize", "--bundle", "bundle", "--tracks", truth, "--flat-ground", "--out", "flat"], tmp.path()));
    for name in ["est", "flat"] {
        let loc = format!("{name}/localization.csv");
        let out = format!("{name}-eval");
        ok(&skyloc(
            &["evaluate", "--bundle", "bundle", "--tracks", truth, "--localization", &loc, "--out", &out],
            tmp.path(),
        ));
    }
    let est = overall_error(&tmp.path().join("est-eval/localization_report.csv"));
    let flat = overall_error(&tmp.path().join("flat-eval/localization_report.csv"));
    assert!(flat > 10.0 * est, "flat {flat} vs estimated {est}");
}

#[test]
fn depth_rasters_match_synthetic_depth() {
    let tmp = TempDir::new().unwrap();
    bundle(tmp.path(), &["--write-depth"]);
    let truth = "bundle/truth_detections.csv";
    ok(&skyloc(&["localize", "--bundle", "bundle", "--tracks", truth, "--out", "files"], tmp.path()));
    ok(&skyloc(
        &["localize", "--tracks", truth, "--scene", "bundle/scene.cfg", "--poses", "bundle/poses.txt", "--out", "synthetic"],
        tmp.path(),
    ));
    let a = csv_rows(&tmp.path().join("files/localization.csv"));
    let b = csv_rows(&tmp.path().join("synthetic/localization.csv"));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b).skip(1) {
        assert_eq!(ra[..2], rb[..2]);
        for c in 2..6 {
            let (x, y): (f64, f64) = (ra[c].parse().unwrap(), rb[c].parse().unwrap());
            // Rasters store single precision.
            assert!((x - y).abs() < 1e-4, "{ra:?} vs {rb:?}");
        }
    }
}

#[test]
fn pipeline_plot_and_ablation() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("small.cfg"), SMALL_SCENE).unwrap();
    let stdout = ok(&skyloc(&["pipeline", "--spec", "small.cfg", "--plot", "--ablation", "--out", "run"], tmp.path()));
    let run = tmp.path().join("run");

    let svg = fs::read_to_string(run.join("localization.svg")).unwrap();
    let ids: BTreeSet<i64> = csv_rows(&run.join("localization.csv"))[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(svg.matches("<polyline").count(), ids.len());
    for id in &ids {
        assert!(svg.contains(&format!("data-track=\"{id}\"")));
    }
    assert!(svg.contains("x (m)") && svg.contains("z (m)"));

    let table = fs::read_to_string(run.join("ablation.txt")).unwrap();
    let methods: Vec<&str> = table.lines().skip(1).filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(methods.len(), 3, "{table}");
    assert!(stdout.contains("Det+Flat_Ground"));
    let csv_methods: BTreeSet<String> = csv_rows(&run.join("ablation.csv"))[1..].iter().map(|r| r[0].clone()).collect();
    assert_eq!(csv_methods.len(), 3);
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("small.cfg"), SMALL_SCENE).unwrap();
    ok(&skyloc(&["--seed", "7", "pipeline", "--spec", "small.cfg", "--plot", "--out", "first"], tmp.path()));
    ok(&skyloc(&["--manifest", "first/manifest.json", "pipeline", "--out", "second"], tmp.path()));
    let a = output_files(&tmp.path().join("first"));
    let b = output_files(&tmp.path().join("second"));
    assert!(a.contains_key("localization.svg"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs");
    }

    // A changed input invalidates the manifest.
    fs::write(tmp.path().join("small.cfg"), "[scene]\nframes = 61\n").unwrap();
    let err = failed(&skyloc(&["--manifest", "first/manifest.json", "pipeline", "--out", "third"], tmp.path()), 3);
    assert!(err.contains("small.cfg"), "{err}");
}

#[test]
fn locked_run_directory_is_refused() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir(tmp.path().join("run")).unwrap();
    fs::write(tmp.path().join("run/.skyloc.lock"), "1\n").unwrap();
    fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let err = failed(&skyloc(&["track", "--detections", "empty.csv", "--out", "run"], tmp.path()), 2);
    assert!(err.contains("locked"), "{err}");
    assert!(!tmp.path().join("run/tracks.csv").exists());
}

#[test]
fn odometry_on_short_sweep() {
    let tmp = TempDir::new().unwrap();
    let spec = "\
[scene]
frames = 30
width = 320
height = 240
seed = 3
[camera]
height = 1.0
pitch = 90
velocity = 0.3, 0.0
[texture]
cell = 0.05
octaves = 2
amplitude = 0.3
[objects]
count = 1
size = 0.05, 0.05, 0.05
distance = 0.05, 0.2
speed = 0, 0
[features]
spacing = 0.04
range = 2.0
";
    fs::write(tmp.path().join("sweep.cfg"), spec).unwrap();
    ok(&skyloc(&["pipeline", "--spec", "sweep.cfg", "--odometry", "--scale-ref", "1", "--out", "run"], tmp.path()));
    let errors = csv_rows(&tmp.path().join("run/odometry_error.csv"));
    assert_eq!(errors.len(), 31);
    let worst = errors[1..].iter().map(|r| r[1].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst < 0.01, "worst position error {worst}");
    assert!(csv_rows(&tmp.path().join("run/depth_seeds.csv")).len() > 100);
}
