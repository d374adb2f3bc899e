use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const STUDY: &str = r#"
seed = 7

[model]
kind = "fgn"
hurst = 0.6

[poly]
kind = "hermite"
q = 2

[grid]
n = [16, 32, 64, 128, 256, 512]
replications = 200

[output]
prefix = "small"
"#;

fn polyvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyvar")).args(args).output().expect("binary runs")
}

fn run_with(dir: &Path, cmd: &str, toml: &str) -> Output {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, toml).unwrap();
    let out = dir.join("out");
    polyvar(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn rate_study_writes_all_outputs() {
    let dir = TempDir::new().unwrap();
    let o = run_with(dir.path(), "rate-study", STUDY);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    assert!(csv.starts_with("n,M,dW_hat,dW_se,dK_hat,tv_bound"), "{}", csv.lines().next().unwrap());
    assert_eq!(csv.lines().count(), 7);

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("small_summary.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["model"]["hurst"], 0.6);
    assert_eq!(json["config"]["grid"]["replications"], 200);
    assert!(json["fit_dW"]["slope"].is_f64());
    assert!(json["fit_dK"]["slope"].is_f64());
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);

    for suffix in ["_dW.dat", "_dK.dat", "_tv.dat"] {
        let dat = fs::read_to_string(out.join(format!("small{suffix}"))).unwrap();
        let first: Vec<f64> = dat.lines().next().unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(first.len(), 2, "{suffix}");
        assert!((first[0] - 16f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(code(&run_with(a.path(), "rate-study", STUDY)), 0);
    assert_eq!(code(&run_with(b.path(), "rate-study", STUDY)), 0);
    for f in ["small.csv", "small_dW.dat", "small_dK.dat"] {
        assert_eq!(fs::read(a.path().join("out").join(f)).unwrap(), fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, STUDY).unwrap();
    let mut csvs = Vec::new();
    for (seed, sub) in [("7", "a"), ("8", "b")] {
        let out = dir.path().join(sub);
        let o = polyvar(&["rate-study", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        csvs.push(fs::read_to_string(out.join("small.csv")).unwrap());
    }
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn selected_distances_only() {
    let dir = TempDir::new().unwrap();
    let toml = STUDY.replace("[output]", "[statistic]\ndistances = [\"kolmogorov\"]\n\n[output]");
    assert_eq!(code(&run_with(dir.path(), "rate-study", &toml)), 0);
    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(row[2].is_empty() && !row[4].is_empty());
    assert!(!out.join("small_dW.dat").exists());
    assert!(out.join("small_dK.dat").exists());
}

#[test]
fn validation_errors_exit_2() {
    let cases = [
        STUDY.replace("hurst = 0.6", "hurst = 0.6\nspeed = 2"),
        STUDY.replace("[16, 32, 64, 128, 256, 512]", "[64, 32, 128]"),
        STUDY.replace("replications = 200", "replications = 50"),
        STUDY.replace("hurst = 0.6", "hurst = 1.2"),
        STUDY.replace("[output]", "[statistic]\ndistances = []\n\n[output]"),
    ];
    for toml in cases {
        let dir = TempDir::new().unwrap();
        let o = run_with(dir.path(), "rate-study", &toml);
        assert_eq!(code(&o), 2, "{toml}\n{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&polyvar(&["bounds", "--config", "/nonexistent/exp.toml"])), 2);
}

#[test]
fn divergent_normalization_exits_3() {
    let dir = TempDir::new().unwrap();
    let toml = STUDY.replace("hurst = 0.6", "hurst = 0.8").replace("[output]", "[statistic]\nnormalization = \"asymptotic_variance\"\n\n[output]");
    let o = run_with(dir.path(), "rate-study", &toml);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn other_subcommands() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for cmd in ["cumulants", "bounds"] {
        let o = run_with(dir.path(), cmd, STUDY);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read_to_string(out.join("small_cumulants.csv")).unwrap().lines().count(), 7);
    assert!(out.join("small_bounds.json").exists());

    let fou = r#"
seed = 3

[model]
kind = "fou"
theta = 1.0
hurst = 0.65

[poly]
kind = "hermite"
q = 2

[statistic]
mode = "nonstationary"

[simulate]
n = 20000

[estimation]
path = "out/run_path_0.csv"
"#;
    let o = run_with(dir.path(), "simulate", fou);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("run_path_0.csv").exists());
    assert!(out.join("run_variation.json").exists());
    let o = run_with(dir.path(), "estimate", fou);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_estimate.json")).unwrap()).unwrap();
    let theta = e["estimate"][0].as_f64().unwrap();
    assert!((theta - 1.0).abs() < 0.15, "theta {theta}");
}
