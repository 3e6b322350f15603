use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layered-ocp"))
}

fn scratch(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("layered-ocp-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    let _ = std::fs::remove_file(&p);
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_names_every_experiment() {
    let o = run(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().any(|l| l == "unicycle-low-order-corridor-vel"));
}

#[test]
fn run_writes_json_report() {
    let out = scratch("report.json");
    let o = run(&[
        "run", "unicycle", "--trials", "2", "--seed", "3", "--horizon", "12", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["experiment"], "unicycle");
    assert_eq!(v["seed"], 3);
    assert_eq!(v["records"].as_array().unwrap().len(), 4);
    let _ = std::fs::remove_file(out);
}

#[test]
fn run_writes_csv_tables() {
    let out = scratch("csv");
    let o = run(&[
        "run", "linear-circle", "--format", "csv", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in ["summary.csv", "trajectories.csv", "residuals.csv", "checks.csv", "aggregates.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let checks = std::fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(checks.contains("oracle-match"));
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn verify_passes() {
    let o = run(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["run", "pendulum"]).status.code(), Some(2));
    assert_eq!(run(&["run", "unicycle", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["run", "unicycle", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(run(&["run", "unicycle", "--rho", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["run"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let cfg = scratch("config.json");
    let out = scratch("from-config.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "experiment": "unicycle",
            "trials": 1,
            "seed": 5,
            "horizon": 12,
            "out": out,
            "admm": { "rho0": 10.0 }
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["horizon"], 12);
    assert_eq!(v["config"]["rho0"], 10.0);
    assert_eq!(v["records"].as_array().unwrap().len(), 2);

    std::fs::write(&cfg, r#"{"experiment": "unicycle", "colour": 1}"#).unwrap();
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let _ = std::fs::remove_file(cfg);
    let _ = std::fs::remove_file(out);
}
