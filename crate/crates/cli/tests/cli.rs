//! End-to-end runs of the `ahl` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ahl")).arg("--config").arg(&path).args(extra).output().unwrap()
}

fn manifest_sums(out: &Path) -> Vec<(String, String)> {
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["file"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn config(command: &str, out: &Path, body: &str) -> String {
    format!(r#"{{"command": "{command}", "output": {:?}, {body}}}"#, out.display().to_string())
}

const MFOLD_CLUSTER: &str = r#""nu": {"kind": "mfold", "m": 3}, "sigma": {"kind": "constant", "d": 0.02},
    "horizon": 0.5, "rate": {"kind": "deterministic"}, "seeds": {"master": 1, "replicas": 1}"#;

#[test]
fn cluster_writes_one_event_per_capacity_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = run(&config("cluster", &out, MFOLD_CLUSTER), dir.path(), &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let events = std::fs::read_to_string(out.join("events.jsonl")).unwrap();
    let lcap = ahl_core::lcap_of_slit(0.02).unwrap();
    assert_eq!(events.lines().count(), (0.5 / lcap).floor() as usize);
    assert_eq!(events.lines().count(), 5100);
    let svgs: Vec<PathBuf> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "svg"))
        .collect();
    assert_eq!(svgs.len(), 1);
    assert!(std::fs::read_to_string(out.join("boundary.csv")).unwrap().starts_with("re,im\n"));
}

#[test]
fn uniform_hull_is_the_scaled_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hull");
    let res = run(&config("hull", &out, r#""nu": {"kind": "uniform"}, "horizon": 0.5"#), dir.path(), &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let pts = ahl_core::io::read_points_csv(std::fs::File::open(out.join("hull.csv")).unwrap()).unwrap();
    assert!(pts.len() >= 512);
    for p in pts {
        assert!((p.norm() - 0.5f64.exp()).abs() < 1e-5, "{}", p.norm());
    }
}

#[test]
fn invalid_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let body = MFOLD_CLUSTER.replace("\"horizon\"", "\"horizn\"");
    let res = run(&config("cluster", &out, &body), dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    let line: Value = serde_json::from_str(String::from_utf8_lossy(&res.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(line["kind"], "config");

    let no_rate = MFOLD_CLUSTER.replace(r#""rate": {"kind": "deterministic"},"#, "");
    let res = run(&config("cluster", &out, &no_rate), dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let res = run(&config("hull", &blocker.join("sub"), r#""nu": {"kind": "uniform"}, "horizon": 0.1"#), dir.path(), &[]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn checksums_are_stable_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#""nu": {"kind": "interval", "eta": 0.5}, "sigma": {"kind": "constant", "d": 0.05},
        "horizon": 0.3, "rate": {"kind": "capacity"}, "seeds": {"master": 4, "replicas": 3},
        "resolution": {"n_points": 512, "n_starts": 6}"#;
    let mut sums = Vec::new();
    for (cmd, threads) in [("cluster", "1"), ("cluster", "2"), ("flow", "1"), ("flow", "3"), ("ode", "1"), ("ode", "2")] {
        let out = dir.path().join(format!("{cmd}{threads}"));
        let res = run(&config(cmd, &out, body), dir.path(), &["--threads", threads]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        sums.push(manifest_sums(&out));
    }
    assert_eq!(sums[0], sums[1]);
    assert_eq!(sums[2], sums[3]);
    assert_eq!(sums[4], sums[5]);
    assert!(sums[2].iter().any(|(f, _)| f == "flow_r2_p5.csv"));
    let header = std::fs::read_to_string(dir.path().join("flow1/flow_r0_p0.csv")).unwrap();
    assert!(header.starts_with("t,value\n"));
}

#[test]
fn replayed_event_log_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#""nu": {"kind": "mfold", "m": 2}, "sigma": {"kind": "constant", "d": 0.05},
        "horizon": 0.2, "rate": {"kind": "capacity"}, "seeds": {"master": 9, "replicas": 1},
        "resolution": {"n_points": 512}"#;
    let first = dir.path().join("first");
    assert!(run(&config("flow", &first, body), dir.path(), &[]).status.success());
    assert!(run(&config("cluster", &first.join("c"), body), dir.path(), &[]).status.success());
    let log = first.join("c/events.jsonl");
    let replay = format!(r#""events": {:?}, "horizon": 0.2, "resolution": {{"n_points": 512}}"#, log.display().to_string());
    let second = dir.path().join("second");
    assert!(run(&config("flow", &second, &replay), dir.path(), &[]).status.success());
    assert!(run(&config("cluster", &second.join("c"), &replay), dir.path(), &[]).status.success());
    for file in ["flow_p0.csv", "flow_p15.csv", "flow_omega3.csv", "c/boundary.csv", "c/events.jsonl"] {
        assert_eq!(std::fs::read(first.join(file)).unwrap(), std::fs::read(second.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn ode_and_fluct_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ode");
    let res =
        run(&config("ode", &out, r#""nu": {"kind": "mfold", "m": 3}, "horizon": 1.0, "starts": [0.1, 0.2]"#), dir.path(), &[]);
    assert!(res.status.success());
    let ode: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ode.json")).unwrap()).unwrap();
    assert_eq!(ode["meta"]["equilibria"].as_array().unwrap().len(), 6);

    let out = dir.path().join("fluct");
    let body = r#""nu": {"kind": "mfold", "m": 1}, "sigma": {"kind": "constant", "d": 0.05}, "horizon": 0.3,
        "rate": {"kind": "capacity"}, "seeds": {"master": 2, "replicas": 20}, "starts": [0.2],
        "resolution": {"sde_paths": 1000}"#;
    let res = run(&config("fluct", &out, body), dir.path(), &["--seed", "3"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fluct.json")).unwrap()).unwrap();
    assert_eq!(rep["meta"]["seed"], 3);
    assert!(rep["report"]["variance_integral"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let body = r#""nu": {"kind": "uniform"}, "sigma": {"kind": "constant", "d": 0.05}, "horizon": 0.3,
        "rate": {"kind": "deterministic"}, "seeds": {"master": 2, "replicas": 2}, "resolution": {"n_points": 512, "n_rays": 64}"#;
    let res = run(&config("compare", &out, body), dir.path(), &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("replica,cluster_hull_hausdorff,flow_distance\n"));

    let out = dir.path().join("verify");
    let res = run(&config("verify", &out, r#""criteria": [1, 4]"#), dir.path(), &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("PASS")).count(), 2);
    let res = run(&config("verify", &out, r#""criteria": [13]"#), dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
}
