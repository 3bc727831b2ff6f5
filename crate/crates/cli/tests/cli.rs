use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn quadham(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadham"))
        .args(args)
        .env_remove("QUADHAM_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = quadham(&["verify", "shivamoggi", "--samples", "50", "--seed", "7", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert!(r["claims"].as_array().unwrap().iter().all(|c| c["anchor"].as_str().is_some_and(|a| !a.is_empty())));

    assert_eq!(code(&quadham(&["verify", "no_such_system"])), 2);
    assert_eq!(code(&quadham(&["verify", "shivamoggi", "-p", "nope=1"])), 2);
    assert_eq!(code(&quadham(&["verify", "shivamoggi", "-p", "bad"])), 2);
    assert_eq!(code(&quadham(&["verify", "lu_original", "-p", "delta=3", "--samples", "10"])), 3);
}

#[test]
fn verify_deterministic_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let o = quadham(&["verify", "qi_special", "--samples", "60", "--seed", "5", "--deterministic", "-o", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let r = json(&a);
    assert!(r["environment"].get("timestamp").is_none());
    // the disputed H3 conservation is reported, not failed
    let h3 = r["claims"].as_array().unwrap().iter().find(|c| c["id"] == "conservation.H3").unwrap();
    assert_eq!(h3["status"], "mismatch-reported");
}

#[test]
fn integrate_writes_trajectory_with_integrals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = quadham(&[
        "integrate", "lu_autonomous", "--t1", "1", "--dt", "0.01", "--record-every", "10", "-o", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    assert_eq!(header.len(), 1 + 4 + 3);
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.split(',').count() == header.len()));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["drift"].as_array().unwrap().iter().all(|d| d["drift"].as_f64().unwrap() < 1e-7));
}

#[test]
fn integrate_json_and_single_row() {
    let o = quadham(&["integrate", "harmonic", "--t1", "0"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("t,x,y,E"));

    let o = quadham(&["integrate", "harmonic", "--t1", "1", "--dt", "0.1", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object() || v.is_array());
}

#[test]
fn integrate_usage_errors() {
    assert_eq!(code(&quadham(&["integrate", "shivamoggi", "--x0", "1,2,1"])), 2);
    assert_eq!(code(&quadham(&["integrate", "shivamoggi", "--method", "leapfrog"])), 2);
    assert_eq!(code(&quadham(&["integrate", "shivamoggi", "--x0", "1,x,1,1"])), 2);
}

#[test]
fn integrate_reports_blowup_as_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = quadham(&["integrate", "shivamoggi", "--x0", "1,2,1,1", "--t1", "10", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["partial"], true);
    assert_eq!(summary["aborted"]["kind"], "non_finite");
    assert!(summary["aborted"]["t"].as_f64().unwrap() < 10.0);
}

#[test]
fn lyapunov_harmonic_is_regular() {
    let o = quadham(&["lyapunov", "harmonic", "--T", "100"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let ex: Vec<f64> = v["exponents"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(ex.len(), 2);
    assert!(ex.iter().all(|x| x.abs() < 0.01), "{ex:?}");
    assert!(v.get("notes").is_none());

    let o = quadham(&["lyapunov", "harmonic"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["T"], 1000.0);
    assert!(v["notes"].as_array().is_some_and(|n| !n.is_empty()));
}

#[test]
fn report_merges_and_warns_on_version_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for (name, p) in [("lorenz_rho0", &a), ("lorenz_conservative", &b)] {
        assert_eq!(code(&quadham(&["verify", name, "--samples", "20", "-o", p.to_str().unwrap()])), 0);
    }
    let merged = dir.path().join("m.json");
    let o = quadham(&["report", a.to_str().unwrap(), b.to_str().unwrap(), "-o", merged.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let m = json(&merged);
    assert_eq!(m["sources"].as_array().unwrap().len(), 2);
    assert!(m.get("warning").is_none());

    let mut other = json(&b);
    other["environment"]["version"] = Value::from("0.0.0-old");
    fs::write(&b, serde_json::to_string(&other).unwrap()).unwrap();
    let o = quadham(&["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(m["warning"].as_str().is_some_and(|w| w.contains("0.0.0-old")));

    assert_eq!(code(&quadham(&["report"])), 2);
}

#[test]
fn list_names_every_system() {
    let o = quadham(&["list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["shivamoggi", "raychaudhuri", "lorenz_rho0", "lu_autonomous", "qi_special"] {
        assert!(text.contains(name), "{name} missing");
    }
}
