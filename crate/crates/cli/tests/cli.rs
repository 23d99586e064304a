use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gmmqf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmmqf")).args(args).output().unwrap()
}

const TINY: &str = "env = \"mountain_car\"\nn_runs = 2\nn_iters = 2\nepisodes = 2\nhorizon_steps = 25\narmijo_steps = 3\nvalidation_horizon_steps = 40\n";

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_csvs_and_echo_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let first = dir.path().join("first");
    let out = gmmqf(&["run", "--config", &cfg, "--workers", "2", "--out", first.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let aggregate = fs::read_to_string(first.join("aggregate.csv")).unwrap();
    assert_eq!(
        aggregate.lines().next().unwrap(),
        "iteration,mean_total_loss,median_total_loss,q25,q75,mean_inner_loss"
    );
    assert_eq!(aggregate.lines().count(), 3);

    let second = dir.path().join("second");
    let echo = first.join("config_echo.toml");
    let out = gmmqf(&["run", "--config", echo.to_str().unwrap(), "--workers", "1", "--out", second.to_str().unwrap()]);
    assert!(out.status.success());
    for file in ["runs.csv", "aggregate.csv"] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(second.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["env = \"pendulum\"\nwhat = 3\n", "env = \"pendulum\"\nn_runs = 0\n", "not toml ["] {
        let cfg = write_config(dir.path(), body);
        let out = gmmqf(&["run", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(!out.stderr.is_empty());
    }
    let out = gmmqf(&["run", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = gmmqf(&["run", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_directory_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let root = dir.path().join("sweep");
    let out = gmmqf(&["sweep-k", "--config", &cfg, "--k", "3,1", "--workers", "1", "--out", root.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("k1/aggregate.csv").exists());
    assert!(root.join("k3/aggregate.csv").exists());
    let report = fs::read_to_string(root.join("sweep_report.txt")).unwrap();
    assert!(report.contains("K=1") && report.contains("K=3"));
    assert!(report.contains("early paired comparisons"));
}

#[test]
fn validate_gradients_reports_errors() {
    let out = gmmqf(&["validate-gradients", "--seed", "3", "--instances", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("max relative error, covariances"));
    assert!(text.trim_end().ends_with("ok"));
}
