use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn check<'a>(v: &'a Value, name: &str) -> &'a Value {
    v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name} in {v}"))
}

fn path(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn triangle_verifies() {
    let out = run(&["verify", &path("triangle3body.sys"), "--config", "c"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = report(&out);
    assert_eq!(v["command"], "verify");
    assert_eq!(check(&v, "closed")["status"], "pass");
    assert_eq!(check(&v, "closed")["value"], 0.0);
}

#[test]
fn non_tree_walks_fail_closedness() {
    let out = run(&["verify", &path("nontree.sys"), "--config", "c", "--checks", "closed"]);
    assert_eq!(out.status.code(), Some(1));
    let v = report(&out);
    let c = check(&v, "closed");
    assert_eq!(c["status"], "fail");
    assert!((c["value"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
}

#[test]
fn fd_mode_agrees() {
    let out = run(&["verify", &path("nontree.sys"), "--config", "c", "--checks", "closed", "--mode", "fd"]);
    assert_eq!(out.status.code(), Some(1));
    let x = check(&report(&out), "closed")["value"].as_f64().unwrap();
    assert!((x - 1.0).abs() <= 1e-6);
}

#[test]
fn star_scattering_is_unitary() {
    let out = run(&["scatter", &path("star3.sys"), "--k", "1.0471975512"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    for name in ["unitarity", "wronskian_flux", "reciprocity"] {
        assert_eq!(check(&v, name)["status"], "pass", "{name}");
    }
}

#[test]
fn scatter_rejects_energy_outside_band() {
    let out = run(&["scatter", &path("star3.sys"), "--k", "4.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn exit_codes_over_corpus() {
    let expected = [
        ("hexagon_frame.sys", 0),
        ("laplacian2d.sys", 0),
        ("line2.sys", 0),
        ("nontree.sys", 1),
        ("pendulum5.sys", 0),
        ("quadratic_planar.sys", 0),
        ("quadratic_ring.sys", 0),
        ("star3.sys", 0),
        ("star3_free.sys", 0),
        ("theta_mixed.sys", 0),
        ("triangle3body.sys", 0),
        ("discrete_line.sys", 0),
        ("xy_ring.sys", 1),
    ];
    for (name, code) in expected {
        let out = run(&["--allow-ends", "verify", &path(name)]);
        assert_eq!(
            out.status.code(),
            Some(code),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let v = report(&out);
        assert!(!v["checks"].as_array().unwrap().is_empty());
    }
    let out = run(&["verify", &path("xy_ring.sys"), "--ridge", "1e-12"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ends_need_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("path.sys");
    std::fs::write(&file, "[graph]\nvertex a\nvertex b\nedge a b\n").unwrap();
    let f = file.to_string_lossy().into_owned();
    let out = run(&["validate", &f]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = run(&["--allow-ends", "validate", &f]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(check(&report(&out), "ends")["status"], "pass");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["validate", "/nonexistent/file.sys"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["verify", &path("triangle3body.sys"), "--checks", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["wronskian", &path("discrete_line.sys")]).status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let args = ["--allow-ends", "verify", &path("theta_mixed.sys")];
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("elapsed_ms");
        v
    };
    let a = strip(report(&run(&args)));
    let b = strip(report(&run(&args)));
    assert_eq!(a, b);
    let digest = a["input_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn json_keys_are_sorted() {
    let out = run(&["verify", &path("triangle3body.sys"), "--checks", "closed"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let pos: Vec<usize> = ["\"checks\"", "\"command\"", "\"elapsed_ms\"", "\"input_sha256\""]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn normalize_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.sys");
    let second = dir.path().join("b.sys");
    let f = first.to_string_lossy().into_owned();
    let s = second.to_string_lossy().into_owned();
    let out = run(&["normalize", &path("theta_mixed.sys"), "-o", &f]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["normalize", &f, "-o", &s]);
    assert_eq!(out.status.code(), Some(0));
    let (a, b) = (std::fs::read_to_string(&first).unwrap(), std::fs::read_to_string(&second).unwrap());
    assert_eq!(a, b);
    assert!(a.contains("path ="));
    let out = run(&["verify", &f, "--checks", "closed"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn solve_and_wronskian() {
    let out = run(&["solve", &path("pendulum5.sys")]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert!(check(&v, "newton")["value"].as_f64().unwrap() <= 1e-10);

    let out = run(&["--allow-ends", "wronskian", &path("discrete_line.sys"), "--config", "rest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = report(&out);
    assert_eq!(check(&v, "nn_identity")["value"], 0.0);
    assert_eq!(check(&v, "cycle")["status"], "pass");
}
