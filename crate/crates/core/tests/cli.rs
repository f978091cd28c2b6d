use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nica(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nica"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn nica")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = nica(args, cwd);
    assert!(
        out.status.success(),
        "nica {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();

    ok(&["gen", "--mode", "tcl", "--n", "600", "--frames", "3", "--seed", "7", "--out", "data"], cwd);
    assert!(cwd.join("data/data.csv").exists());
    let manifest = json(&cwd.join("data/manifest.json"));
    assert_eq!(manifest["n"], 600);

    ok(
        &[
            "train", "--data", "data/data.csv", "--width", "8", "--epochs", "2", "--seed", "3",
            "--out", "ckpt.json", "--trace", "trace.csv",
        ],
        cwd,
    );
    let trace = std::fs::read_to_string(cwd.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3);

    ok(&["eval", "--checkpoint", "ckpt.json", "--data", "data/data.csv", "--out", "mi.json"], cwd);
    let mi = json(&cwd.join("mi.json"));
    assert!(mi["mean_mi"].as_f64().unwrap().is_finite());
    assert_eq!(mi["assignment"].as_array().unwrap().len(), 2);

    ok(
        &[
            "diagnose", "--checkpoint", "ckpt.json", "--data", "data/data.csv", "--manifest",
            "data/manifest.json", "--points", "5", "--out", "gamma",
        ],
        cwd,
    );
    assert!(json(&cwd.join("gamma.json"))["points"].is_array());
    assert!(cwd.join("gamma.csv").exists());

    ok(
        &[
            "bound", "--c-x", "1", "--c-u", "1", "--layer-norms", "1,1", "--dim", "1", "--layers", "2", "--n",
            "100", "--out", "bound.json",
        ],
        cwd,
    );
    let b = json(&cwd.join("bound.json"));
    assert!((b["rademacher"].as_f64().unwrap() - 2.0 * 0.02f64.sqrt()).abs() < 1e-12);

    ok(&["bound", "--checkpoint", "ckpt.json", "--out", "bound2.json"], cwd);
    assert!(json(&cwd.join("bound2.json"))["recovery"].as_f64().unwrap() > 0.0);

    ok(
        &[
            "sweep", "--mode", "mvcl", "--n", "400", "--widths", "4,8", "--trials", "1", "--epochs", "1",
            "--threads", "1", "--out", "runs",
        ],
        cwd,
    );
    let results = std::fs::read_to_string(cwd.join("runs/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2);
    assert!(cwd.join("runs/report.svg").exists());

    let rep = ok(&["report", "--results", "runs/results.csv", "--out", "rep"], cwd);
    assert!(String::from_utf8_lossy(&rep.stdout).contains("| 400 | 8 |"));
    assert!(cwd.join("rep/report.svg").exists());
    assert!(cwd.join("rep/aggregate.csv").exists());
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "s_0,x_0,u_0,d\n1,2,oops,1\n").unwrap();
    let out = nica(&["train", "--data", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));
}
