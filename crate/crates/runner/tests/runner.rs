use std::fs;
use std::path::Path;
use std::process::Command;

use chetaev_runner::{load, parse_config, run, scenarios, LoadError, RunOptions, RunStatus};
use serde_json::Value;

const SMALL: &str = "\
[system]
potential = harmonic

[grid]
min = -8
max = 8
points = 64

[initial]
state = coherent
amplitude = 1

[evolution]
dt = 0.01
t_final = 0.2
store_every = 2

[analysis]
operations = trajectories, moments, uncertainty, continuity
n_traj = 200
equivariance_tol = 0.5
growth_tol = 0.5
seed = 3
continuity_tol = 1

[output]
directory = small
snapshots = all
";

fn opts(root: &Path) -> RunOptions {
    RunOptions {
        out_root: root.to_path_buf(),
        quiet: true,
    }
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn step<'a>(m: &'a Value, name: &str) -> &'a Value {
    m["steps"].as_array().unwrap().iter().find(|s| s["name"] == name).unwrap()
}

#[test]
fn every_scenario_parses_and_its_echo_round_trips() {
    assert!(scenarios::SCENARIOS.len() >= 10);
    for s in scenarios::SCENARIOS {
        let c = load(s.id).unwrap_or_else(|e| panic!("{}: {e}", s.id));
        assert_eq!(parse_config(&c.to_ini()).unwrap(), c, "{}", s.id);
        assert_eq!(c.output.directory, s.id);
    }
}

#[test]
fn unknown_scenario_lists_valid_ids() {
    let e = load("no-such-scenario").unwrap_err();
    assert!(matches!(e, LoadError::Unknown { .. }));
    let msg = e.to_string();
    for id in scenarios::ids() {
        assert!(msg.contains(id), "{msg}");
    }
}

#[test]
fn repeated_runs_write_identical_data_files() {
    let cfg = parse_config(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&cfg, &opts(a.path())).unwrap();
    let rb = run(&cfg, &opts(b.path())).unwrap();
    assert_eq!(ra.status, RunStatus::Passed);
    let files: Vec<String> = ra.manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect();
    assert!(files.iter().any(|f| f == "trajectories.csv"));
    assert!(files.iter().any(|f| f == "psi_00010.csv"));
    for f in &files {
        assert_eq!(fs::read(ra.dir.join(f)).unwrap(), fs::read(rb.dir.join(f)).unwrap(), "{f}");
    }
    let echo = ra.manifest["config"].as_str().unwrap();
    assert_eq!(parse_config(echo).unwrap(), cfg);
    assert_eq!(ra.manifest["seed"], 3);
}

#[test]
fn snapshot_columns_are_index_coordinates_and_components() {
    let cfg = parse_config(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, &opts(dir.path())).unwrap();
    let text = fs::read_to_string(out.dir.join("psi_00000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,x,re,im"));
    assert_eq!(text.lines().count(), 65);
    assert!(!text.contains('\r'));
}

#[test]
fn zero_final_time_still_runs_static_analyses() {
    let text = SMALL
        .replace("t_final = 0.2", "t_final = 0")
        .replace("trajectories, moments, uncertainty, continuity", "quantum_potential, moments, uncertainty, continuity")
        .replace("n_traj = 200\nequivariance_tol = 0.5\ngrowth_tol = 0.5\n", "")
        .replace("seed = 3\n", "");
    let cfg = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(out.status, RunStatus::Passed);
    let m = manifest(&out.dir);
    assert_eq!(step(&m, "evolution")["status"], "skipped");
    assert_eq!(step(&m, "continuity")["status"], "skipped");
    for (name, file) in [("quantum_potential", "quantum_potential.csv"), ("moments", "moments.csv"), ("uncertainty", "uncertainty.csv")] {
        assert_eq!(step(&m, name)["status"], "passed");
        assert!(out.dir.join(file).is_file(), "{file}");
    }
    assert_eq!(m["seed"], 0);
}

const GUARD_VIOLATION: &str = "\
[system]
potential = free

[grid]
min = -10
max = 10
points = 64

[initial]
state = plane_wave
momentum = 5

[evolution]
dt = 0.05
t_final = 1
store_every = 10

[analysis]
operations = trajectories, moments
n_traj = 10

[output]
directory = crash
";

#[test]
fn failing_step_still_writes_a_manifest() {
    let cfg = parse_config(GUARD_VIOLATION).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(out.status, RunStatus::Error);
    let m = manifest(&out.dir);
    assert_eq!(m["status"], "error");
    assert_eq!(m["failed_step"], "trajectories");
    assert!(m["error"].as_str().unwrap().contains("sampling"), "{}", m["error"]);
    assert_eq!(step(&m, "evolution")["status"], "passed");
    assert_eq!(step(&m, "moments")["status"], "not_run");
    assert!(out.dir.join("evolution.csv").is_file());
}

#[test]
fn failed_tolerances_mark_the_run_failed() {
    let text = SMALL.replace("continuity_tol = 1", "continuity_tol = 1e-12");
    let dir = tempfile::tempdir().unwrap();
    let out = run(&parse_config(&text).unwrap(), &opts(dir.path())).unwrap();
    assert_eq!(out.status, RunStatus::ChecksFailed);
    assert_eq!(manifest(&out.dir)["failed_step"], "continuity");
}

fn lab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chetaev-lab"));
    c.env_remove("CHETAEV_LAB_OUT");
    c
}

#[test]
fn cli_lists_scenarios() {
    let out = lab().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), scenarios::SCENARIOS.len());
    assert!(text.contains("ho-coherent"));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ini");
    fs::write(&bad, SMALL.replace("points = 64", "points = 4").replace("n_traj = 200", "n_traj = 200\nbogus = 1")).unwrap();
    let out = lab().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("points ≥ 8 required") && err.contains("unknown key `bogus`"), "{err}");

    let out = lab().args(["run", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("ho-ground"));

    let crash = dir.path().join("crash.ini");
    fs::write(&crash, GUARD_VIOLATION).unwrap();
    let out = lab().arg("run").arg(&crash).arg("--quiet").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let strict = dir.path().join("strict.ini");
    fs::write(&strict, SMALL.replace("continuity_tol = 1", "continuity_tol = 1e-12")).unwrap();
    let out = lab().arg("run").arg(&strict).arg("--quiet").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn cli_output_root_from_env_and_flag() {
    let (env_root, flag_root) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = env_root.path().join("small.ini");
    fs::write(&cfg, SMALL).unwrap();
    let out = lab()
        .arg("run")
        .arg(&cfg)
        .args(["--quiet", "--seed", "11"])
        .env("CHETAEV_LAB_OUT", env_root.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&env_root.path().join("small"));
    assert_eq!(m["seed"], 11);
    assert!(m["config"].as_str().unwrap().contains("seed = 11"));

    let out = lab()
        .arg("run")
        .arg(&cfg)
        .arg("--quiet")
        .arg("--out")
        .arg(flag_root.path())
        .env("CHETAEV_LAB_OUT", env_root.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_root.path().join("small/manifest.json").is_file());
}
