use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PAIR: &str = r#"
[system]
masses = [1.0, 1.0]
dim = 2
alpha = 3.0
energy = 1.0

[discretization]
harmonics = 16

[solver]
radius = 1.0

[continuation]
radii = [1.0, 2.0, 4.0, 8.0, 16.0]
"#;

fn matched() -> String {
    // (alpha/2 - 1) |V(1)| / H with |V(1)| = m1 m2 / 2^alpha for the antipodal pair.
    let r = (0.5f64 / 8.0).powf(1.0 / 3.0);
    PAIR.replace("radius = 1.0", &format!("radius = {r:?}"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strongforce")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn invoke(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--quiet", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn error_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap()
}

#[test]
fn solve_writes_four_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PAIR);
    let out = tmp.path().join("out");
    let o = invoke("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solve_report.json", "loop.json", "trajectory.csv", "diagnostics.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("solve_report.json")).unwrap()).unwrap();
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["converged"], true);
}

#[test]
fn hypotheses_are_enforced() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (from, to, needle) in [("alpha = 3.0", "alpha = 2.0", "α>2"), ("energy = 1.0", "energy = -1.0", "H>0")] {
        let cfg = write_config(tmp.path(), &PAIR.replace(from, to));
        let o = invoke("solve", &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(3));
        let e = error_json(&o);
        assert_eq!(e["exit_code"], 3);
        assert!(e["message"].as_str().unwrap().contains(needle), "{e}");
    }
}

#[test]
fn empty_schedule_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &PAIR.replace("radii = [1.0, 2.0, 4.0, 8.0, 16.0]", "radii = []"));
    let o = invoke("sweep", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

fn strip_metadata(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert!(v.as_object_mut().unwrap().remove("metadata").is_some());
    v
}

#[test]
fn sweep_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PAIR);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(invoke("sweep", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(invoke("sweep", &cfg, &b, &["--threads", "3"]).status.code(), Some(0));
    let doc = strip_metadata(&a.join("sweep.json"));
    assert_eq!(doc["records"].as_array().unwrap().len(), 5);
    assert!(doc["classification"].is_object());
    assert_eq!(doc, strip_metadata(&b.join("sweep.json")));
    for k in 0..5 {
        let sub = format!("R{k:02}");
        for f in ["solve_report.json", "loop.json", "trajectory.csv", "diagnostics.json"] {
            let x = fs::read(a.join(&sub).join(f)).unwrap();
            assert_eq!(x, fs::read(b.join(&sub).join(f)).unwrap(), "{sub}/{f}");
        }
    }
}

#[test]
fn verify_round_trip_and_fault_injection() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &matched());
    let out = tmp.path().join("solve");
    assert_eq!(invoke("solve", &cfg, &out, &[]).status.code(), Some(0));
    let csv = out.join("trajectory.csv");
    let v = tmp.path().join("verify");
    let o = invoke("verify", &cfg, &v, &[csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let doc: Value = serde_json::from_str(&fs::read_to_string(v.join("verification.json")).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);

    // Nudge one velocity component of one row.
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[20].split(',').map(String::from).collect();
    let last = cells.len() - 1;
    cells[last] = format!("{}", cells[last].trim().parse::<f64>().unwrap() + 0.1);
    lines[20] = cells.join(",");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = invoke("verify", &cfg, &v, &[bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let doc: Value = serde_json::from_str(&fs::read_to_string(v.join("verification.json")).unwrap()).unwrap();
    assert_eq!(doc["energy_ok"], false);

    // Drop one row so the count is no longer a multiple of N.
    lines.remove(20);
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    assert_eq!(invoke("verify", &cfg, &v, &[bad.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn empty_trajectory_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), PAIR);
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = invoke("verify", &cfg, &tmp.path().join("v"), &[empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "MalformedTrajectory");
}
