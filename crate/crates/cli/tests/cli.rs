use std::path::Path;
use std::process::{Command, Output};

fn sasaki(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sasaki"));
    c.args(args).env_remove("SASAKI_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    sasaki(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn without_timestamp(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].trim_start().starts_with("\"timestamp_unix\""), "{}", lines[1]);
    lines.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| *l).collect::<Vec<_>>().join("\n")
}

#[test]
fn distance_oracles() {
    let out = run(&["distance", "--sr", "0,0,0", "1,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["length"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let out = run(&["distance", "--sr", "0,0,0", "0,0,1"]);
    let v = json(&out);
    let expected = 2.0 * std::f64::consts::PI.sqrt();
    assert!((v["length"].as_f64().unwrap() - expected).abs() < 1e-6 * expected, "{v}");
    assert!((v["closed_form"].as_f64().unwrap() - expected).abs() < 1e-9);

    // negative coordinates parse as values, and d_τ sits below d
    let out = run(&["distance", "--tau", "1", "-1,0.5,0", "0,0,1"]);
    assert_eq!(out.status.code(), Some(0));
    let dt = json(&out)["length"].as_f64().unwrap();
    let d = json(&run(&["distance", "--sr", "-1,0.5,0", "0,0,1"]))["length"].as_f64().unwrap();
    assert!(dt > 0.0 && dt <= d);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["distance", "0,0,0", "1,0,0"]).status.code(), Some(2));
    assert_eq!(run(&["distance", "--sr", "0,0", "1,0,0"]).status.code(), Some(2));
    assert_eq!(run(&["distance", "--tau", "-1", "0,0,0", "1,0,0"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "cd", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "liyau", "--n", "2"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "heat", "--t", "1,x"]).status.code(), Some(2));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn unreachable_tolerance_exits_3() {
    let out = run(&["distance", "--sr", "0,0,0", "1,0,1", "--set", "shooting_tol=1e-40"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn broken_simulator_fails_the_gate_with_exit_1() {
    // a single Euler step never leaves z = 0, so the off-plane cells see no paths
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["verify", "liyau", "--out-dir", out_dir, "--set", "gate_steps=1"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("liyau.json")).unwrap()).unwrap();
    assert_eq!(report["gate"]["pass"], false);
    assert_eq!(report["summary"]["total"], 0);
}

#[test]
fn harnack_reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut first = sasaki(&["verify", "harnack", "--count", "10", "--seed", "7", "--out-dir", a.path().to_str().unwrap()]);
    first.env("RAYON_NUM_THREADS", "1");
    let mut second = sasaki(&["verify", "harnack", "--count", "10", "--seed", "7", "--out-dir", b.path().to_str().unwrap()]);
    second.env("RAYON_NUM_THREADS", "3");
    assert_eq!(first.output().unwrap().status.code(), Some(0));
    assert_eq!(second.output().unwrap().status.code(), Some(0));
    assert_eq!(without_timestamp(&a.path().join("harnack.json")), without_timestamp(&b.path().join("harnack.json")));
    let csv_a = std::fs::read(a.path().join("harnack.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join("harnack.csv")).unwrap());
    assert_eq!(String::from_utf8(csv_a).unwrap().lines().count(), 12);
}

#[test]
fn empty_sweep_grid_writes_only_the_header() {
    let out = run(&["sweep", "heat", "--t", ""]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "t,x,y,z,p,ln_p,dt_log,grad_log_x,grad_log_y,reeb_log,quad_error,deriv_error,status\n");
    let out = run(&["sweep", "distance-ratio", "--lambda", ""]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

#[test]
fn sweeps_are_sorted_and_complete() {
    let out = run(&["sweep", "heat", "--t", "2,0.5,1", "--y", "0,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let ts: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ts, vec![0.5, 1.0, 2.0]);
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        let p: f64 = r[4].parse().unwrap();
        assert!((p - 1.0 / (16.0 * t * t)).abs() < 1e-9 * p);
    }
    let out = run(&["sweep", "liyau-margin", "--t", "log:0.1:2:3", "--tau", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 3 * 10);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let seed_of = |cmd: &mut Command| {
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cd.json")).unwrap()).unwrap();
        v["config"]["seed"].as_u64().unwrap()
    };
    let small = ["--set", "cd_polys=2", "--set", "cd_points=2"];
    let mut c = sasaki(&["verify", "cd", "--out-dir", out_dir]);
    c.args(small).env("SASAKI_SEED", "5");
    assert_eq!(seed_of(&mut c), 5);

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nseed = 8\ncd_polys = 3\n").unwrap();
    let mut c = sasaki(&["verify", "cd", "--out-dir", out_dir, "--config", cfg.to_str().unwrap()]);
    c.env("SASAKI_SEED", "5");
    assert_eq!(seed_of(&mut c), 8);

    let mut c = sasaki(&["verify", "cd", "--out-dir", out_dir, "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    c.args(small);
    assert_eq!(seed_of(&mut c), 9);
}

#[test]
fn cd_suite_passes_and_includes_the_equality_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "cd", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cd.json")).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["summary"]["failed"], 0);
    let reports = v["reports"].as_array().unwrap();
    let sharp: Vec<_> = reports.iter().filter(|r| r["inputs"]["polynomial"] == "z").collect();
    assert_eq!(sharp.len(), 3);
    assert!(sharp.iter().all(|r| r["margin"].as_f64().unwrap().abs() <= 1e-12));
}
