use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topoidx"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("TOPOIDX_THREADS")
        .output()
        .expect("spawn topoidx")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn report(out: &Path, name: &str) -> Value {
    let v = read_json(&out.join(name));
    assert_eq!(v["schema"], "topoidx.report/1");
    v
}

#[test]
fn build_qwz_writes_snapshot_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build", "--model", "qwz", "--m", "1", "--R", "8"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(dir.path(), "build.json");
    assert_eq!(v["status"], "ok");
    assert!(v["result"]["gap"]["value"].as_f64().unwrap() > 1e-3);
    assert_eq!(v["result"]["gap"]["tol"], 1e-6);
    assert_eq!(v["result"]["class_residuals"]["pass"], true);
    assert!(dir.path().join("snapshot.json").is_file());
    assert!(dir.path().join("locality.csv").is_file());
}

#[test]
fn missing_parameter_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build", "--model", "qwz", "--R", "8"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--m"));
    let o = run(&["build", "--m", "1", "--R", "8"], dir.path());
    assert_eq!(code(&o), 2);
    let o = run(&["build", "--model", "qwz", "--m", "1", "--R", "8", "--d", "3"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn closed_gap_exits_3() {
    // an open Kitaev chain at μ = 0, t = Δ has exact Majorana end modes
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build", "--model", "kitaev", "--mu", "0", "--t", "1", "--delta", "1", "--R", "10"], dir.path());
    assert_eq!(code(&o), 3);
    assert_eq!(report(dir.path(), "build.json")["status"], "gap_closed");
}

#[test]
fn same_seed_same_snapshot_hash() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let args = |seed: &'static str| ["build", "--model", "qwz", "--m", "1", "--R", "6", "--disorder", "0.5", "--seed", seed];
    for (d, seed) in dirs.iter().zip(["7", "7", "8"]) {
        assert_eq!(code(&run(&args(seed), d.path())), 0);
    }
    let hash = |d: &tempfile::TempDir| report(d.path(), "build.json")["result"]["snapshot"]["sha256"].as_str().unwrap().to_string();
    assert_eq!(hash(&dirs[0]), hash(&dirs[1]));
    assert_ne!(hash(&dirs[0]), hash(&dirs[2]));
    let a = std::fs::read(dirs[0].path().join("snapshot.json")).unwrap();
    let b = std::fs::read(dirs[1].path().join("snapshot.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn index_ssh_from_flags_and_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["index", "--model", "ssh", "--t1", "0", "--t2", "1", "--R", "30"], dir.path());
    assert_eq!(code(&o), 0);
    let v = report(dir.path(), "index.json");
    assert_eq!(v["result"]["value"], 1);
    assert_eq!(v["result"]["certified"], true);
    assert_eq!(v["result"]["input"]["momentum_oracle"]["value"], 1);
    assert!(std::fs::read_to_string(dir.path().join("index.csv")).unwrap().starts_with("radius,raw"));

    // the open chain has zero-energy end modes, so build reports a closed gap
    // but still saves the snapshot
    let snap_dir = tempfile::tempdir().unwrap();
    let o = run(&["build", "--model", "ssh", "--t1", "0", "--t2", "1", "--R", "30"], snap_dir.path());
    assert_eq!(code(&o), 3);
    let snap = snap_dir.path().join("snapshot.json");
    let o = run(&["index", "--snapshot", snap.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(report(dir.path(), "index.json")["result"]["value"], 1);
}

#[test]
fn index_qwz_and_half_plane() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["index", "--model", "qwz", "--m", "1", "--R", "12"], dir.path())), 0);
    assert_eq!(report(dir.path(), "index.json")["result"]["value"], -1);
    assert_eq!(code(&run(&["index", "--model", "half-plane", "--R", "12"], dir.path())), 0);
    let v = report(dir.path(), "index.json");
    assert_eq!(v["result"]["value"], 0);
    assert!(v["result"]["raw"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn under_resolved_radii_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["index", "--model", "ssh", "--t1", "0", "--t2", "1", "--radii", "2,3"], dir.path());
    assert_eq!(code(&o), 4);
    assert_eq!(report(dir.path(), "index.json")["status"], "not_converged");
    let o = run(&["index", "--model", "ssh", "--t1", "0", "--t2", "1", "--radii", "16,20,24"], dir.path());
    assert_eq!(code(&o), 0);
    let table = &report(dir.path(), "index.json")["result"]["table"];
    assert_eq!(table.as_array().unwrap().len(), 3);
}

#[test]
fn class_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["index", "--model", "ssh", "--t1", "0", "--t2", "1", "--R", "20", "--class", "A"], dir.path());
    assert_eq!(code(&o), 2);
}

fn certified(args: &[&str]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let o = run(args, dir.path());
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    let v = report(dir.path(), "homotopy.json");
    assert_eq!(v["status"], "certified");
    assert_eq!(v["result"]["certificate"]["verdict"], true);
    assert!(dir.path().join("homotopy.csv").is_file());
    v
}

#[test]
fn homotopy_pipelines_certify() {
    certified(&["homotopy", "--pipeline", "flatten", "--model", "ssh", "--t1", "1", "--t2", "0.3", "--R", "20"]);
    let v = certified(&["homotopy", "--pipeline", "pin", "--model", "ssh", "--t1", "1", "--t2", "0", "--R", "20"]);
    let blocks = &v["result"]["details"]["blocks"];
    assert!(blocks["diagonal"].as_f64().unwrap() < 1e-8);
    assert!(blocks["off_diagonal"].as_f64().unwrap() < 1e-8);
    let v = certified(&["homotopy", "--pipeline", "e-flip", "--R", "10"]);
    assert!(v["result"]["details"]["max_membership"].as_f64().unwrap() < 1e-12);
    let v = certified(&["homotopy", "--pipeline", "diii-pin", "--R", "20", "--grid", "5"]);
    assert!(v["result"]["details"]["max_membership"].as_f64().unwrap() < 1e-8);
    let v = certified(&["homotopy", "--pipeline", "compress", "--R", "24", "--grid", "11"]);
    assert!(v["result"]["details"]["compression"]["leakage"].as_f64().unwrap() <= 1e-15);
}

#[test]
fn unknown_pipeline_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["homotopy", "--pipeline", "bogus", "--R", "4"], dir.path())), 2);
    assert_eq!(code(&run(&["homotopy", "--R", "4"], dir.path())), 2);
}

#[test]
fn table_reference_and_evidence() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["table", "--d", "2", "--class", "A"], dir.path())), 0);
    let v = report(dir.path(), "table.json");
    let cell = &v["result"]["cells"][0];
    assert_eq!(cell["group"], "ℤ");
    let values: Vec<i64> = cell["evidence"].as_array().unwrap().iter().map(|e| e["value"].as_i64().unwrap()).collect();
    let oracles: Vec<i64> = cell["evidence"].as_array().unwrap().iter().map(|e| e["oracle"].as_i64().unwrap()).collect();
    assert_eq!(values, oracles);
    let mut sorted = values.clone();
    sorted.sort();
    assert_eq!(sorted, vec![-1, 0, 1]);

    assert_eq!(code(&run(&["table", "--d", "1"], dir.path())), 0);
    let v = report(dir.path(), "table.json");
    let cells = v["result"]["cells"].as_array().unwrap();
    let find = |c: &str| cells.iter().find(|x| x["class"] == c).unwrap();
    assert_eq!(find("AI")["group"], "0");
    assert_eq!(find("D")["group"], "ℤ₂");
    assert_eq!(find("D")["status"], "not numerically computed");
    assert_eq!(find("AIII")["status"], "index computed");
    for c in cells {
        for e in c["evidence"].as_array().unwrap() {
            if e["kind"] == "membership" {
                assert!(e["max"].as_f64().unwrap() < 1e-10, "{e}");
            }
        }
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "ssh", "params": {"t1": 1, "t2": 0}, "R": 20}"#).unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["index", "--config", c], dir.path())), 0);
    assert_eq!(report(dir.path(), "index.json")["result"]["value"], 0);
    assert_eq!(code(&run(&["index", "--config", c, "--t1", "0", "--t2", "1"], dir.path())), 0);
    assert_eq!(report(dir.path(), "index.json")["result"]["value"], 1);

    std::fs::write(&cfg, r#"{"model": "ssh", "tolerances": {"gap": -1}}"#).unwrap();
    assert_eq!(code(&run(&["index", "--config", c], dir.path())), 2);
    std::fs::write(&cfg, r#"{"model": "ssh", "unknown": 1}"#).unwrap();
    assert_eq!(code(&run(&["index", "--config", c], dir.path())), 2);
    assert_eq!(code(&run(&["index", "--config", "/nonexistent/run.json"], dir.path())), 2);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_topoidx");
    let o = Command::new(bin).args(["table", "--d", "1", "--class", "D", "--out"]).arg(dir.path()).env("TOPOIDX_THREADS", "0").output().unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(bin).args(["table", "--d", "1", "--class", "D", "--out"]).arg(dir.path()).env("TOPOIDX_THREADS", "1").output().unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn verify_passes_and_rechecks_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["build", "--model", "qwz", "--m", "1", "--R", "6"], dir.path())), 0);
    let snap = dir.path().join("snapshot.json");
    let o = run(&["verify", "--snapshot", snap.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = report(dir.path(), "verify.json");
    let checks = v["result"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["pass"] == true));
    assert!(checks.iter().any(|c| c["name"] == "snapshot class constraints"));
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["homotopy", "--pipeline", "e-flip", "--R", "6"];
    assert_eq!(code(&run(&args, dir.path())), 0);
    let first = std::fs::read(dir.path().join("homotopy.json")).unwrap();
    assert_eq!(code(&run(&args, dir.path())), 0);
    assert_eq!(first, std::fs::read(dir.path().join("homotopy.json")).unwrap());
}
