use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const NOISE_OFF: &str = "\
noise.a_plus = 0
noise.a_minus = 0
noise.l_plus = 0
noise.l_minus = 0
noise.skew = 1
noise.blur.minus.sigma0 = 0
noise.blur.minus.c1 = 0
noise.blur.plus.sigma0 = 0
noise.blur.plus.c1 = 0
";

fn hom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn shots(p: &Path) -> Vec<(u32, u32)> {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N_plus,N_minus"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

fn csv_column(p: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "c.txt", "shots_per_angle = 300\n");
    for out in ["a", "b"] {
        ok(hom(dir.path(), &["--config", "c.txt", "--seed", "9", "--out", out, "simulate", "--signals"]));
    }
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in &names {
        let a = fs::read(dir.path().join("a").join(n)).unwrap();
        let b = fs::read(dir.path().join("b").join(n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }
    ok(hom(dir.path(), &["--config", "c.txt", "--seed", "10", "--out", "c", "simulate"]));
    assert_ne!(fs::read(dir.path().join("a/shots_00.csv")).unwrap(), fs::read(dir.path().join("c/shots_00.csv")).unwrap());

    let meta = &json(&dir.path().join("a/shots.json"))["meta"];
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn noiseless_interference_gives_even_counts() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "c.txt", &format!("{NOISE_OFF}angles = 1.5707963267948966\nshots_per_angle = 2000\n"));
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "s", "simulate"]));
    let rows = shots(&dir.path().join("s/shots_00.csv"));
    assert_eq!(rows.len(), 2000);
    assert!(rows.iter().all(|&(p, m)| p % 2 == 0 && m % 2 == 0));
    assert!(rows.iter().any(|&(p, m)| p + m > 0));
}

#[test]
fn default_mean_total_atoms() {
    let dir = tempfile::tempdir().unwrap();
    ok(hom(dir.path(), &["--out", "s", "simulate"]));
    let index = json(&dir.path().join("s/shots.json"));
    let means: Vec<f64> = index["mean_total_atoms"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let tails: Vec<f64> = index["truncated_mass"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // Source mean 7.5. Truncation at 20 pairs per mode leaves 7.20, and the
    // influx and loss stages add about 0.04.
    let source_tail = index["source_truncated_mass"].as_f64().unwrap();
    assert!((source_tail - 0.00698).abs() < 1e-4, "{source_tail}");
    assert!((means[0] - 7.24).abs() < 0.15, "{means:?}");
    assert!((means[0] - 7.5).abs() < 0.5);
    // Coupled outcomes with more than 20 atoms in one mode leave the grid.
    assert!(tails[0] < 0.01 && tails[5] > tails[0], "{tails:?}");
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "angle.txt", "angles = 0, 4.0\n");
    config(dir.path(), "key.txt", "no_such_key = 1\n");
    config(dir.path(), "loss.json", "{\"noise\": {\"a_plus\": 0, \"a_minus\": 0, \"l_plus\": 2, \"l_minus\": 0, \"skew\": 1, \"blur\": {\"minus\": {\"sigma0\": 0, \"c1\": 0}, \"plus\": {\"sigma0\": 0, \"c1\": 0}}}}");
    for cfg in ["angle.txt", "key.txt", "loss.json"] {
        let out = hom(dir.path(), &["--config", cfg, "simulate"]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    assert_eq!(hom(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(hom(dir.path(), &["analyze", "missing_dir"]).status.code(), Some(2));
    fs::create_dir(dir.path().join("empty")).unwrap();
    assert_eq!(hom(dir.path(), &["analyze", "empty"]).status.code(), Some(1));
}

fn measured_rows() -> String {
    // (N, Pi_x, |Pi_z|, <Jx^2 + Jy^2>, Var Jz) for N = 2..12.
    let rows = [
        (2, 0.892, 0.965, 1.892, 0.0176),
        (4, 0.821, 0.951, 5.08, 0.025),
        (6, 0.833, 0.942, 11.26, 0.029),
        (8, 0.821, 0.806, 19.0, 0.098),
        (10, 0.872, 0.822, 25.7, 0.091),
        (12, 0.61, 0.862, 33.7, 0.067),
    ];
    let items: Vec<String> = rows
        .iter()
        .map(|(n, px, pz, j2, v)| {
            format!("{{\"n_total\": {n}, \"jxjy2\": {j2}, \"var_jz\": {v}, \"parity_z\": {pz}, \"parity_x\": {px}}}")
        })
        .collect();
    format!("{{\"rows\": [{}]}}", items.join(", "))
}

#[test]
fn depth_from_published_moments() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "rows.json", &measured_rows());
    ok(hom(dir.path(), &["--out", "d", "depth", "rows.json"]));
    let parity = csv_column(&dir.path().join("d/depth.csv"), "depth_parity");
    let variance = csv_column(&dir.path().join("d/depth.csv"), "depth_variance");
    for (i, want) in [2.0, 4.0, 6.0, 8.0, 9.0, 10.0].iter().enumerate() {
        let tol = if i >= 4 { 1.0 } else { 0.0 };
        assert!((parity[i] - want).abs() <= tol, "{parity:?}");
        assert!(variance[i] <= parity[i] + 1.0 && variance[i] >= 1.0, "{variance:?}");
    }
    let doc = json(&dir.path().join("d/depth.json"));
    assert_eq!(doc["meta"]["command"], "depth");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn witness_from_published_moments() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "rows.json", &measured_rows());
    ok(hom(dir.path(), &["--out", "w", "witness", "rows.json"]));
    let doc = json(&dir.path().join("w/witness.json"));
    let rows = doc["rows"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["parity"]["entangled"] == true));
    let w = &doc["indefinite_n"];
    assert_eq!(w["entangled"], true);
    assert!(w["value"].as_f64().unwrap() < -0.2, "{w}");
}

#[test]
fn noiseless_analysis_and_missing_quarter_turn() {
    let dir = tempfile::tempdir().unwrap();
    config(
        dir.path(),
        "c.txt",
        &format!("{NOISE_OFF}angles = 0, 1.5707963267948966\nshots_per_angle = 3000\nresamples = 200\natom_numbers = 2, 4, 6\n"),
    );
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "s", "simulate"]));
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "a", "analyze", "s"]));
    let col = dir.path().join("a/collective.csv");
    assert!(csv_column(&col, "parity_x").iter().all(|&p| p == 1.0));
    assert!(csv_column(&col, "abs_parity_z").iter().all(|&p| p == 1.0));
    let depth = dir.path().join("a/depth.csv");
    assert_eq!(csv_column(&depth, "k68_parity"), vec![2.0, 4.0, 6.0]);

    let out = ok(hom(dir.path(), &["--config", "c.txt", "--out", "z", "analyze", "s/shots_00.csv@0"]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("notice: no dataset at theta = pi/2"));
    let report = json(&dir.path().join("z/report.json"));
    assert!(!report["notices"].as_array().unwrap().is_empty());
    assert!(!dir.path().join("z/depth.csv").exists());
}

#[test]
fn fisher_on_small_angle_data() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "c.txt", "resamples = 100\n");
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "s", "simulate"]));
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "f", "fisher", "s", "--exact", "--quartic"]));
    let doc = json(&dir.path().join("f/fisher.json"));
    let s = doc["estimate"]["scaling"]["s"].as_f64().unwrap();
    assert!((1.5..2.3).contains(&s), "{s}");
    let n = csv_column(&dir.path().join("f/fisher_scaling.csv"), "N");
    assert_eq!(n, vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]);
}

#[test]
fn calibrate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "c.txt", "angles = 0\n");
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "s", "simulate", "--signals"]));
    ok(hom(dir.path(), &["--config", "c.txt", "--out", "k", "calibrate", "s/signals_00.csv", "--quantize", "0"]));
    let cal = json(&dir.path().join("k/calibration.json"));
    let g = cal["calibration"]["minus"]["g"].as_f64().unwrap();
    assert!((g / 975.8 - 1.0).abs() < 0.02, "{g}");
    let g = cal["calibration"]["plus"]["g"].as_f64().unwrap();
    assert!((g / 832.5 - 1.0).abs() < 0.02, "{g}");
    let truth = shots(&dir.path().join("s/shots_00.csv"));
    let got = shots(&dir.path().join("k/shots_00.csv"));
    assert_eq!(truth.len(), got.len());
    let same = truth.iter().zip(&got).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
    assert!(same > 0.9, "{same}");
    assert!(dir.path().join("k/histogram_minus.csv").exists());
}
