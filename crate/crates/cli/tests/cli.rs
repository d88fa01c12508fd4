use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pilotwave"));
    c.env_remove("PILOTWAVE_OUT");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn list_has_every_scenario_with_anchor() {
    let o = run(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.contains("Fig.") || l.contains("Eq")));
    let o = run(&["list", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names[0], "fig1_two_slit");
    assert_eq!(names.len(), 8);
}

#[test]
fn list_json_matches_golden() {
    let o = run(&["list", "--json"]);
    assert_eq!(stdout(&o), std::fs::read_to_string(data("list.golden.json")).unwrap());
}

#[test]
fn unknown_scenario_exits_2() {
    let o = run(&["run", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scenario"));
}

#[test]
fn validate_exit_codes() {
    let good = data("born_small.toml");
    assert_eq!(run(&["validate", good.to_str().unwrap()]).status.code(), Some(0));
    let bad = run(&["validate", data("bad_type.toml").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`n`"));
    assert_eq!(run(&["validate", "/definitely/not/here.toml"]).status.code(), Some(2));
}

#[test]
fn bad_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "born_measurement", "--n", "5", "--dt", "-1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_run_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("born_small.toml");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let got = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(got, std::fs::read_to_string(data("born_small.report.golden.json")).unwrap());
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "protective_empty_wave", "--n", "5", "--plots", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "traj_id,t,x,z,w,occupied_branch,node_flag");
    assert_eq!(lines.count(), 5 * 171);
    let svg = std::fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.contains("<polyline"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["spec"]["dt"].as_f64(), Some(0.01));
    assert!(report["artifacts"].as_array().unwrap().iter().any(|a| a == "plot.svg"));
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "born_measurement", "--n", "5"])
        .env("PILOTWAVE_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("born_measurement/report.json").exists());
}

#[test]
fn failed_assertions_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "fig3b_swap", "--n", "40", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL excited_path"));
    assert!(dir.path().join("report.json").exists());
}
