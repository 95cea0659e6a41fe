use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn neckvol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neckvol"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = neckvol(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

/// Renders three front and three back captures into `front/` and `back/`.
fn captures(dir: &Path) {
    ok(dir, &["phantom", "--view", "both", "--frames", "3", "--seed", "4", "--out", "cap"]);
    for v in ["front", "back"] {
        fs::create_dir(dir.join(v)).unwrap();
        for e in fs::read_dir(dir.join("cap")).unwrap() {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            if name.starts_with(v) {
                fs::rename(&p, dir.join(v).join(&name)).unwrap();
            }
        }
    }
}

#[test]
fn pipeline_matches_the_subcommands() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    captures(d);
    fs::write(d.join("cfg.json"), r#"{"gap_mm": 3.0, "dy_mm": 5.0}"#).unwrap();
    let c = ["--config", "cfg.json", "--deterministic"];
    let run = |args: &[&str]| ok(d, &[args, &c[..]].concat());
    run(&["filter", "--input-dir", "front", "--out", "f.pgm"]);
    run(&["filter", "--input-dir", "back", "--out", "b.pgm"]);
    run(&["merge", "--front", "f.pgm", "--back", "b.pgm", "--out", "cloud.ply"]);
    run(&["volume", "--cloud", "cloud.ply", "--out", "steps.json", "--profile-csv", "steps.csv"]);
    run(&["pipeline", "--front-dir", "front", "--back-dir", "back", "--out", "oneshot.json", "--profile-csv", "oneshot.csv"]);
    assert_eq!(fs::read(d.join("steps.json")).unwrap(), fs::read(d.join("oneshot.json")).unwrap());
    assert_eq!(fs::read(d.join("steps.csv")).unwrap(), fs::read(d.join("oneshot.csv")).unwrap());

    let report: Value = serde_json::from_slice(&fs::read(d.join("oneshot.json")).unwrap()).unwrap();
    assert_eq!(report["parameters"]["gap_mm"], 3.0);
    assert!(report["timestamp"].is_null());

    let delta: Value = serde_json::from_str(&run(&["compare", "--reference", "steps.json", "--current", "oneshot.json"])).unwrap();
    assert_eq!(delta["delta_liters"], 0.0);
}

#[test]
fn flags_override_the_config_file() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    captures(d);
    fs::write(d.join("cfg.json"), r#"{"gap_mm": 3.0}"#).unwrap();
    ok(d, &["pipeline", "--front-dir", "front", "--back-dir", "back", "--config", "cfg.json", "--gap-mm", "7", "--deterministic", "--out", "r.json"]);
    let r: Value = serde_json::from_slice(&fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(r["parameters"]["gap_mm"], 7.0);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();

    let out = neckvol(d, &["volume", "--cloud", "c.ply", "--out", "r.json", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");
    assert!(!d.join("r.json").exists());

    let out = neckvol(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = neckvol(d, &["volume", "--cloud", "missing.ply"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"], "io");

    fs::write(d.join("tiny.ply"), "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n").unwrap();
    let out = neckvol(d, &["volume", "--cloud", "tiny.ply"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let out = neckvol(d, &["phantom", "--ground-truth", "--dy-mm=-1"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "invalid_config");

    let out = Command::new(env!("CARGO_BIN_EXE_neckvol"))
        .args(["phantom", "--ground-truth"])
        .env("NECKVOL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ground_truth_and_single_view_outputs() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let gt: Value = serde_json::from_str(&ok(d, &["phantom", "--ground-truth"])).unwrap();
    let v = gt["neck_volume_liters"].as_f64().unwrap();
    assert!((v - 0.942_477_796).abs() < 1e-8);

    ok(d, &["--mm-per-pixel", "2.5", "phantom", "--view", "front", "--frames", "2", "--out", "cap"]);
    ok(d, &["filter", "--input", "cap/front_000.pgm", "cap/front_001.pgm", "--out", "f.pgm"]);
    let m: Value = serde_json::from_str(&ok(d, &["locate", "--reference", "f.pgm", "--template-rect", "40,50,40,60", "--input", "f.pgm"])).unwrap();
    assert_eq!((m["row"].as_u64(), m["col"].as_u64()), (Some(40), Some(50)));
    ok(d, &["circ", "--input", "f.pgm", "--out", "circ.json", "--csv", "raw.csv", "--smoothed-csv", "smooth.csv"]);
    let raw = fs::read_to_string(d.join("raw.csv")).unwrap();
    assert!(raw.starts_with("row,length_mm\n"));
    assert_eq!(raw.lines().count(), fs::read_to_string(d.join("smooth.csv")).unwrap().lines().count());
}
