use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use qrotor_cli::{run, ExperimentConfig};

fn listing(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(text).unwrap();
    c.out = Some(out.to_path_buf());
    c
}

#[test]
fn validate_matches_exact_diagonalization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"
        kind = "validate"
        [model]
        len = 4
        n_max = 2
        ej = 1.2
        ej2 = [0.0, 0.3]
        ej1 = 0.1
        "#,
        dir.path(),
    );
    let m = run(&cfg).unwrap();
    assert_eq!(m.status, "completed");
    assert_eq!(m.points.len(), 2);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validate.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["max_relative_error"].as_f64().unwrap() <= 1e-8);
    let listed: BTreeSet<String> = m.artifacts.iter().cloned().collect();
    assert_eq!(listed, listing(dir.path()));
}

#[test]
fn deconfined_tension_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"
        kind = "string-tension"
        [model]
        len = 24
        n_max = 3
        ej = 2.0
        ej2 = 0.3
        [truncation]
        chi_max = 24
        [string_tension]
        separations = [2, 3, 4, 5, 6]
        "#,
        dir.path(),
    );
    let m = run(&cfg).unwrap();
    assert!(m.points.iter().all(|p| p.ok));
    let text = std::fs::read_to_string(dir.path().join("sigma.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let spread: f64 = row[7].parse().unwrap();
    assert!(spread <= 1e-3, "T(d) spread {spread}");
    assert_eq!(listing(dir.path()), m.artifacts.iter().cloned().collect());
}

#[test]
fn identical_runs_reproduce() {
    let text = r#"
        kind = "validate"
        seed = 5
        [model]
        len = 4
        n_max = 1
        ej = [0.5, 1.0, 1.5]
        "#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = config(text, a.path());
    ca.threads = 1;
    let mut cb = config(text, b.path());
    cb.threads = 3;
    let ma = run(&ca).unwrap();
    let mb = run(&cb).unwrap();
    for (x, y) in ma.points.iter().zip(&mb.points) {
        assert_eq!(x.label, y.label);
        assert!((x.energy.unwrap() - y.energy.unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn binary_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "kind = \"validate\"\n[model]\nlenght = 4\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qrotor"))
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lenght"));
}

#[test]
fn binary_runs_a_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("v.toml");
    std::fs::write(&cfg, "[model]\nlen = 3\nn_max = 1\nej = 0.7\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_qrotor"))
        .args(["validate", "--threads", "1", "--chi", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn readme_example_is_valid() {
    let readme = include_str!("../../../README.md");
    let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let cfg = ExperimentConfig::parse(block).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.model.points().len(), 2);
}
