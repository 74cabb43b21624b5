use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn diffw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> Vec<Value> {
    serde_json::from_str::<Value>(&fs::read_to_string(path).unwrap())
        .unwrap()
        .as_array()
        .unwrap()
        .clone()
}

#[test]
fn group_axioms_pass_with_enough_checks() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("axioms.json");
    let out = diffw(&[
        "run",
        "--suite",
        "group-axioms",
        "--dim",
        "1",
        "--seed",
        "42",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let checks = records(&report);
    assert!(checks.len() >= 4);
    for c in &checks {
        for key in ["name", "paper_anchor", "residual", "tolerance", "pass"] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn counterexample_values_reach_one() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("gap.json");
    let out = diffw(&[
        "run",
        "--suite",
        "counterexample",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let values: Vec<f64> = records(&report)
        .iter()
        .filter(|c| c["name"].as_str().unwrap().starts_with("counterexample.n"))
        .map(|c| c["value"].as_f64().unwrap())
        .collect();
    assert_eq!(values.len(), 20);
    assert!(values.iter().all(|v| *v >= 1.0 - 1e-9));

    let sub = dir.path().join("sub.json");
    assert_eq!(
        diffw(&["counterexample", "--report", sub.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let rows = records(&sub);
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0]["n"], 1);
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let paths = ["a.json", "b.json"].map(|n| dir.path().join(n));
    for p in &paths {
        let out = diffw(&[
            "run",
            "--suite",
            "inversion",
            "--seed",
            "7",
            "--report",
            p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
}

#[test]
fn bad_suite_names_exit_with_two() {
    assert_eq!(
        diffw(&["run", "--suite", "nonsense"]).status.code(),
        Some(2)
    );
    assert_eq!(diffw(&["run", "--suite", ""]).status.code(), Some(2));
    assert_eq!(diffw(&["run"]).status.code(), Some(2));
    assert_eq!(
        diffw(&["run", "--suite", "seminorms", "--dim", "x"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn failing_checks_exit_with_one() {
    let out = diffw(&["run", "--suite", "counterexample", "--tol=-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_report_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("missing").join("r.json");
    let out = diffw(&[
        "run",
        "--suite",
        "counterexample",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(
        diffw(&["run", "--config", "/nonexistent/cfg.toml"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let report = dir.path().join("out.csv");
    fs::write(
        &cfg,
        format!(
            "suite = \"nonsense\"\nseed = 3\ncsv = true\nreport = \"{}\"\n\n[domain]\npoints_per_axis = 101\n",
            report.display()
        ),
    )
    .unwrap();
    assert_eq!(
        diffw(&["run", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let out = diffw(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--suite",
        "counterexample",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("name,paper_anchor,residual,tolerance,pass"));
    assert_eq!(text.lines().count(), 22);

    fs::write(&cfg, "suite = \"seminorms\"\nunknown_key = 1\n").unwrap();
    assert_eq!(
        diffw(&["run", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn evolve_reports_the_time_one_map() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.toml");
    let report = dir.path().join("evolve.json");
    fs::write(&field, "kind = \"linear\"\nmatrix = [[0.5]]\n").unwrap();
    let out = diffw(&[
        "evolve",
        "--field",
        field.to_str().unwrap(),
        "--steps",
        "200",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let body: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(body["steps"], 200);
    let scale = 0.5f64.exp() - 1.0;
    for p in body["points"].as_array().unwrap() {
        let x = p["x"][0].as_f64().unwrap();
        assert!((p["gamma"][0].as_f64().unwrap() - scale * x).abs() < 1e-8);
    }

    fs::write(
        &field,
        "kind = \"bump\"\ncenter = [0.0]\nsigma = 0.8\namplitude = [0.4]\ncoeffs = [0.0, 2.0]\n",
    )
    .unwrap();
    assert_eq!(
        diffw(&["evolve", "--field", field.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );

    fs::write(&field, "kind = \"spiral\"\n").unwrap();
    assert_eq!(
        diffw(&["evolve", "--field", field.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn semidirect_verify_passes() {
    let out = diffw(&["semidirect-verify", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let checks: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(checks.len(), 3);
    assert!(checks.iter().all(|c| c["pass"] == true));
}
