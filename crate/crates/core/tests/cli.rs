use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[model]
n = 2
[grid]
resolution = 16
[initial]
u0_mean = -0.05
[flow]
t_max = 10.0
u_floor = -1e-12
record_every = 50
trajectory_tracking = true
seeds = [[1.0, 2.0]]
";

fn ifcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifcf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn oracle_row_at_t2_matches_closed_form() {
    let out = ifcf(&["oracle", "--u0", "-0.5", "--t-max", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["t", "u", "u_tilde", "F"]);
    let row = rdr
        .records()
        .map(|r| r.unwrap())
        .find(|r| r[0].parse::<f64>().unwrap() == 2.0)
        .expect("row at t = 2");
    let u: f64 = row[1].parse().unwrap();
    assert!((u + 0.5 * (-1.0f64).exp()).abs() < 1e-16);
    assert_eq!(row[2].parse::<f64>().unwrap(), -0.5);
    let first = rdr_first_f(&text);
    assert!((first * 0.5 - 2.0).abs() < 1e-14);
}

fn rdr_first_f(text: &str) -> f64 {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records().next().unwrap().unwrap()[3].parse().unwrap()
}

#[test]
fn simulate_is_deterministic_and_transition_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = ifcf(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let ta = fs::read(a.join("trace.json")).unwrap();
    assert_eq!(ta, fs::read(b.join("trace.json")).unwrap());
    assert!(a.join("trajectories.csv").exists());
    let snaps: Vec<_> = fs::read_dir(a.join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 2);
    let snap = fs::read_to_string(a.join("snapshots/snapshot_0000.csv")).unwrap();
    assert!(snap.starts_with("# {"));
    assert!(snap.contains("model_hash"));
    assert!(snap.lines().nth(1).unwrap().starts_with("x1,x2,u,v,kappa1,kappa2,F"));

    let res = ifcf(&["transition", "--trace", a.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut rdr = csv::Reader::from_path(a.join("transition.csv")).unwrap();
    let slopes: Vec<f64> = rdr
        .deserialize::<std::collections::HashMap<String, String>>()
        .map(|r| {
            let r = r.unwrap();
            r["y0"].parse::<f64>().unwrap() / r["s"].parse::<f64>().unwrap()
        })
        .collect();
    // y0 = -gamma u0 s = 0.025 s
    for k in &slopes {
        assert!((k / 0.025 - 1.0).abs() < 1e-9, "{k}");
    }
    let c3: serde_json::Value = serde_json::from_slice(&fs::read(a.join("c3_report.json")).unwrap()).unwrap();
    assert_eq!(c3["all_pass"], true);

    let res = ifcf(&["report", "--trace", a.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["rates.json", "umbilicality.csv", "transition.csv", "c3_report.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let far = write_config(dir.path(), "far.cfg", &SMALL.replace("-0.05", "-0.9"));
    assert_eq!(ifcf(&["simulate", "--config", &far, "--out", out]).status.code(), Some(2));

    let unknown = write_config(dir.path(), "unknown.cfg", &format!("{SMALL}colour = 3\n"));
    let res = ifcf(&["simulate", "--config", &unknown, "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("colour"));

    let missing = dir.path().join("nope.cfg");
    assert_eq!(
        ifcf(&["simulate", "--config", missing.to_str().unwrap(), "--out", out]).status.code(),
        Some(6)
    );
    let no_trace = dir.path().join("no_trace");
    assert_eq!(ifcf(&["report", "--trace", no_trace.to_str().unwrap()]).status.code(), Some(6));

    // a run too short for the transition
    let short = write_config(dir.path(), "short.cfg", &SMALL.replace("t_max = 10.0", "t_max = 1.0"));
    assert!(ifcf(&["simulate", "--config", &short, "--out", out]).status.success());
    assert_eq!(ifcf(&["transition", "--trace", out]).status.code(), Some(9));

    assert_eq!(ifcf(&["check-curvature", "scalar"]).status.code(), Some(2));
}

#[test]
fn check_curvature_certificates() {
    let res = ifcf(&["check-curvature", "gauss_root"]);
    assert!(res.status.success());
    let cert: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(cert["positive"], true);
    assert_eq!(cert["informational"], false);
    assert!(cert["epsilon0_estimate"].as_f64().unwrap() > 0.0);

    let res = ifcf(&["check-curvature", "mean", "--samples", "2000"]);
    let cert: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(cert["informational"], true);
    assert_eq!(cert["samples"], 2000);
}
