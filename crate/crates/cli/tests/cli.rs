use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn censorlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_censorlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn ising(graph: &str, beta: f64) -> String {
    format!(r#"{{"model": {{"kind": "ising", "beta": {beta}, "graph": {graph}}}}}"#)
}

const P3: &str = r#"{"family": "path", "n": 3}"#;

#[test]
fn verify_censoring_certifies_ferromagnets() {
    let dir = TempDir::new().unwrap();
    for beta in [0.0, 0.4] {
        let cfg = write_config(dir.path(), "c.json", &ising(P3, beta));
        let out = censorlab(&["verify-censoring", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_censoring.json")).unwrap()).unwrap();
        assert!(report["claims"].as_array().unwrap().iter().all(|c| c["verdict"] == "certified"));
    }
}

#[test]
fn antiferromagnet_is_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &ising(P3, -0.5));
    let out = censorlab(&["verify-censoring", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system not monotone"));
}

#[test]
fn bad_configs_exit_two() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(dir.path(), "u.json", r#"{"model": null, "bogus": 1}"#);
    assert_eq!(censorlab(&["hanging", "--config", &unknown]).status.code(), Some(2));
    let eps = write_config(dir.path(), "e.json", &ising(P3, 0.1).replacen('{', r#"{"epsilon": 1.5, "#, 1));
    assert_eq!(censorlab(&["compare-schedules", "--config", &eps]).status.code(), Some(2));
    let missing = write_config(dir.path(), "m.json", r#"{"model_file": "nowhere.json"}"#);
    assert_eq!(censorlab(&["compare-schedules", "--config", &missing]).status.code(), Some(2));
    let cycle5 = write_config(dir.path(), "c5.json", &ising(r#"{"family": "cycle", "n": 5}"#, 0.2));
    assert_eq!(censorlab(&["contraction", "--config", &cycle5]).status.code(), Some(2));
}

#[test]
fn enumeration_budget_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "big.json", &ising(r#"{"family": "torus", "d": 2, "n": 8}"#, 0.2));
    let out = censorlab(&["verify-censoring", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unmet_gamma_target_exits_one() {
    let dir = TempDir::new().unwrap();
    let text =
        ising(r#"{"family": "cycle", "n": 6}"#, 0.2).replacen('{', r#"{"contraction": {"gamma_target": 0.9}, "#, 1);
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = censorlab(&["contraction", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = std::fs::read_to_string(dir.path().join("contraction.json")).unwrap();
    assert!(report.contains("pipeline halted"));
    assert!(std::fs::read_to_string(dir.path().join("phi.csv"))
        .unwrap()
        .starts_with("u,block_index,block,phi,witness\n"));
}

#[test]
fn compare_emits_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &ising(r#"{"family": "cycle", "n": 4}"#, 0.4));
    let out = censorlab(&["compare-schedules", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("tv_curves.csv")).unwrap();
    assert!(csv.starts_with("step,tv,schedule_id\n"));
    assert!(csv.contains(",alternating_top\n"));
}

#[test]
fn odd_cycle_skips_alternating() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &ising(r#"{"family": "cycle", "n": 5}"#, 0.4));
    let out = censorlab(&["compare-schedules", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Skipped"));
}

#[test]
fn hanging_refuses_two_attachment_points() {
    let dir = TempDir::new().unwrap();
    let text =
        r#"{"hanging": {"n_sites": 4, "edges": [[0, 1], [1, 2], [2, 3], [3, 0]], "h_sites": [0, 1], "beta": 0.3}}"#;
    let cfg = write_config(dir.path(), "h.json", text);
    assert_eq!(censorlab(&["hanging", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn mc_flags_and_missing_output_dir() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "m.json", r#"{"mc": {"checkpoint_every": 64}}"#);
    let out_dir = dir.path().to_str().unwrap();
    let args = [
        "mc",
        "--config",
        &cfg,
        "--size",
        "16",
        "--beta",
        "0",
        "--schedule",
        "random",
        "--seeds",
        "32",
        "--out",
        out_dir,
    ];
    assert_eq!(censorlab(&args).status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert!(csv.starts_with("seed,replica,step,hamming,mag_top,mag_bottom\n"));

    let missing = dir.path().join("absent");
    let out = censorlab(&["mc", "--config", &cfg, "--size", "8", "--out", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = write_config(a.path(), "m.json", r#"{"seed": 3, "mc": {"replicas": 8, "checkpoint_every": 32}}"#);
    for dir in [&a, &b] {
        let out =
            censorlab(&["mc", "--config", &cfg, "--size", "8", "--beta", "0.3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["trajectories.csv", "mc_coalescence.json", "claims.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let cfg = write_config(a.path(), "h.json", "{}");
    for dir in [&a, &b] {
        censorlab(&["hanging", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    }
    assert_eq!(
        std::fs::read(a.path().join("hanging.json")).unwrap(),
        std::fs::read(b.path().join("hanging.json")).unwrap()
    );
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        censorlab::config::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
