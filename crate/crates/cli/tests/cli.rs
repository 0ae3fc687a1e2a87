use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const STAGES: [&str; 6] = ["verify", "find", "index", "flow", "complex", "homology"];

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn run(args: &[&str], out: &Path, extra_env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_morse-action"));
    cmd.args(args).arg("--out").arg(out);
    for (k, v) in extra_env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn pipeline(name: &str, out: &Path, extra: &[&str], env: &[(&str, &str)]) {
    let p = problem(name);
    for st in STAGES {
        let mut args = vec![st, p.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = run(&args, out, env);
        assert_eq!(code(&o), 0, "{st} {name}: {}", stderr(&o));
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["verify", problem("pendulum.json").to_str().unwrap()], dir.path(), &[]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(json(&dir.path().join("verify.json"))["passed"].as_bool().unwrap());

    let bad = run(
        &["verify", problem("inverted-oscillator.json").to_str().unwrap()],
        dir.path(),
        &[],
    );
    assert_eq!(code(&bad), 1);
    let report = json(&dir.path().join("verify.json"));
    let failures = report["failures"].as_array().unwrap();
    assert!(
        failures.iter().any(|f| f.as_str().unwrap().contains("l0")),
        "{failures:?}"
    );
}

#[test]
fn malformed_input_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(problem("pendulum.json")).unwrap();
    let truncated = dir.path().join("truncated.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    let o = run(&["verify", truncated.to_str().unwrap()], dir.path(), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, text.replacen("\"sublevel\"", "\"sublevle\"", 1)).unwrap();
    assert_eq!(code(&run(&["verify", unknown.to_str().unwrap()], dir.path(), &[])), 2);

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["verify", missing.to_str().unwrap()], dir.path(), &[])), 2);

    let p = problem("pendulum.json");
    assert_eq!(
        code(&run(&["find", p.to_str().unwrap(), "--mesh", "4"], dir.path(), &[])),
        2
    );
}

#[test]
fn missing_upstream_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("pendulum.json");
    let p = p.to_str().unwrap();
    for (stage, upstream) in [
        ("find", "verify"),
        ("index", "find"),
        ("flow", "index"),
        ("complex", "flow"),
        ("homology", "complex"),
    ] {
        let o = run(&[stage, p], dir.path(), &[]);
        assert_eq!(code(&o), 3, "{stage}");
        assert!(stderr(&o).contains(&format!("`{upstream}`")), "{stage}: {}", stderr(&o));
    }
    assert_eq!(code(&run(&["find", p, "--force"], dir.path(), &[])), 0);
}

#[test]
fn failed_verify_blocks_find_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("inverted-oscillator.json");
    let p = p.to_str().unwrap();
    assert_eq!(code(&run(&["verify", p], dir.path(), &[])), 1);
    assert_eq!(code(&run(&["find", p], dir.path(), &[])), 1);
    assert_eq!(code(&run(&["find", p, "--force"], dir.path(), &[])), 0);
}

#[test]
fn mesh_mismatch_requires_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("pendulum.json");
    let p = p.to_str().unwrap();
    assert_eq!(code(&run(&["verify", p], dir.path(), &[])), 0);
    assert_eq!(code(&run(&["find", p, "--mesh", "32"], dir.path(), &[])), 0);
    let o = run(&["index", p, "--mesh", "48"], dir.path(), &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("`find`"));
}

#[test]
fn pendulum_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    pipeline("pendulum.json", dir.path(), &["--sublevel", "1.0"], &[]);
    let cps = json(&dir.path().join("critical_points.json"));
    let points = cps["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    let mut actions: Vec<f64> = points.iter().map(|p| p["action"].as_f64().unwrap()).collect();
    actions.sort_by(f64::total_cmp);
    assert!(
        (actions[0] + 0.5).abs() < 1e-8 && (actions[1] - 0.5).abs() < 1e-8,
        "{actions:?}"
    );
    for p in points {
        assert!(dir.path().join(p["path_file"].as_str().unwrap()).exists());
    }
    let complex = json(&dir.path().join("complex.json"));
    assert_eq!(complex["boundary"], serde_json::json!([[[0]]]));
    let h = json(&dir.path().join("homology.json"));
    assert_eq!(h["betti"], serde_json::json!([1, 1]));
    assert!(h["passed"].as_bool().unwrap());
    let flow = json(&dir.path().join("flow.json"));
    assert!(flow["monotone"].as_bool().unwrap());
    assert_eq!(flow["trajectories"].as_array().unwrap().len(), 2);
}

#[test]
fn duffing_homology_matches_contractible() {
    let dir = tempfile::tempdir().unwrap();
    pipeline("duffing.json", dir.path(), &[], &[]);
    let h = json(&dir.path().join("homology.json"));
    assert_eq!(h["betti"], serde_json::json!([1, 0]));
    assert!(h["passed"].as_bool().unwrap());
    assert_eq!(h["reference"]["reference"], "contractible");
    let complex = json(&dir.path().join("complex.json"));
    let d1 = &complex["boundary"][0];
    assert_eq!(d1[0][0].as_i64().unwrap().abs(), 1);
    assert_eq!(d1[0][0].as_i64().unwrap(), -d1[1][0].as_i64().unwrap());
}

#[test]
fn winding_sublevels() {
    let dir = tempfile::tempdir().unwrap();
    pipeline("winding.json", dir.path(), &[], &[]);
    assert_eq!(json(&dir.path().join("homology.json"))["betti"], serde_json::json!([3]));
    let p = problem("winding.json");
    let p = p.to_str().unwrap();
    assert_eq!(code(&run(&["complex", p, "--sublevel", "2.5"], dir.path(), &[])), 0);
    let o = run(&["homology", p, "--sublevel", "2.5"], dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&dir.path().join("homology.json"))["betti"], serde_json::json!([5]));
}

#[test]
fn torus_mod2_complex() {
    let dir = tempfile::tempdir().unwrap();
    pipeline("torus.json", dir.path(), &[], &[]);
    let h = json(&dir.path().join("homology.json"));
    assert_eq!(h["betti"], serde_json::json!([1, 2, 1]));
    assert_eq!(h["coefficients"], "mod2_exploratory");
}

#[test]
fn fixed_seed_reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(
        "duffing.json",
        a.path(),
        &["--seed", "11"],
        &[("MORSE_ACTION_THREADS", "1")],
    );
    pipeline(
        "duffing.json",
        b.path(),
        &["--seed", "11"],
        &[("MORSE_ACTION_THREADS", "4")],
    );
    for name in [
        "verify.json",
        "critical_points.json",
        "index.json",
        "flow.json",
        "complex.json",
        "homology.json",
        "trajectories/flow_002_0_plus.csv",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn probe_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["probe-c2", problem("pendulum.json").to_str().unwrap()],
        dir.path(),
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("probe_c2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(dir.path().join("probe_c2.json").exists());
}
