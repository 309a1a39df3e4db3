use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scalesync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scalesync"))
        .args(args)
        .env_remove("SCALESYNC_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Copy of a fixture config inside `dir`, with edits applied. Model paths are
/// made absolute so the copy resolves them.
fn config_with(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(fixture(name)).unwrap()).unwrap();
    for key in ["model", "precompensator"] {
        if let Some(Value::String(p)) = v.get(key) {
            v[key] = Value::String(fixture(p).to_string_lossy().into_owned());
        }
    }
    edit(&mut v);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_reference_ct_agent_with_precompensator() {
    let out = scalesync(&["check", "--model", s(&fixture("ct_model.json")), "--precomp", s(&fixture("ct_precomp.json"))]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("design path            ok"));
}

#[test]
fn check_reference_dt_agent() {
    let out = scalesync(&["check", "--model", s(&fixture("dt_model.json"))]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn check_double_integrator_names_violations() {
    let out = scalesync(&["check", "--model", s(&fixture("double_integrator.json")), "--json"]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let names: Vec<&str> = report["necessity"]["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["holds"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["neutrally_stable", "relative_degree_one"]);
}

#[test]
fn check_unstable_discrete_agent() {
    let out = scalesync(&["check", "--model", s(&fixture("unstable_dt.json"))]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("neutrally_stable"));
}

#[test]
fn malformed_json_is_an_input_error() {
    let out = scalesync(&["check", "--model", s(&fixture("malformed.json"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_referenced_file_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "dt_full.json", |v| v["model"] = "nowhere.json".into());
    assert_eq!(code(&scalesync(&["synth", s(&cfg)])), 2);
}

#[test]
fn protocol_kind_must_match_time_domain() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "dt_full.json", |v| v["protocol"] = "ct_full".into());
    assert_eq!(code(&scalesync(&["synth", s(&cfg)])), 2);
}

#[test]
fn unknown_subcommand_is_an_input_error() {
    assert_eq!(code(&scalesync(&["frobnicate"])), 2);
}

#[test]
fn synth_dt_full_reports_epsilon_star() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let out = scalesync(&["synth", s(&fixture("dt_full.json")), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("epsilon* = 0.5"));
    let proto = read_json(&out_dir.join("protocol.json"));
    assert_eq!(proto["kind"], "dt_full");
    assert_eq!(proto["epsilon_star"].as_f64().unwrap(), 0.5);
}

#[test]
fn synth_ct_partial_writes_design_blocks() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    assert_eq!(code(&scalesync(&["synth", s(&fixture("ct_case2.json")), "--out", s(&out_dir)])), 0);
    let proto = read_json(&out_dir.join("protocol.json"));
    assert_eq!(proto["kind"], "ct_partial");
    for key in ["H", "P"] {
        assert!(proto[key].is_array(), "{key}");
    }
    for key in ["S", "S_inv", "A11", "Cbar"] {
        assert!(proto["scb"][key].is_array(), "{key}");
    }
    assert_eq!(proto["H"], serde_json::json!([[1.0], [0.0], [1.0]]));
}

#[test]
fn delta_above_bound_needs_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = fixture("dt_partial_delta_high.json");
    let out_dir = tmp.path().join("o");
    let out = scalesync(&["synth", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds certified bound"));
    let out = scalesync(&["synth", s(&cfg), "--out", s(&out_dir), "--override-gain-bound"]);
    assert_eq!(code(&out), 0);
    let proto = read_json(&out_dir.join("protocol.json"));
    assert_eq!(proto["gain_override"], true);
    assert!(proto["constants"]["kappa"].as_f64().unwrap() > 0.0);
}

#[test]
fn single_agent_has_zero_error() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    assert_eq!(code(&scalesync(&["simulate", s(&fixture("ct_single.json")), "--out", s(&out_dir)])), 0);
    let csv = fs::read_to_string(out_dir.join("sync_error.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,sync_error"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.ends_with(",0")));
    let errors = fs::read_to_string(out_dir.join("error_states.csv")).unwrap();
    assert_eq!(errors.trim(), "t,agent,state_index,value");
}

#[test]
fn simulate_writes_all_outputs_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(code(&scalesync(&["simulate", s(&fixture("ct_full.json")), "--out", s(dir)])), 0);
    }
    for file in ["trajectory.csv", "sync_error.csv", "error_states.csv", "summary.json", "protocol.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let summary = read_json(&a.join("summary.json"));
    assert_eq!(summary["synchronized"], true);
    assert_eq!(summary["agents"], 8);
    assert!(summary["time_to_threshold"].as_f64().unwrap() > 0.0);

    let traj = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    let first = traj.lines().nth(1).unwrap();
    assert!(first.starts_with("0,1,1,"), "{first}");
}

#[test]
fn synthesized_protocol_is_reused_without_resynthesis() {
    let tmp = TempDir::new().unwrap();
    let synth_dir = tmp.path().join("synth");
    let sim_dir = tmp.path().join("sim");
    let cfg = fixture("dt_full.json");
    assert_eq!(code(&scalesync(&["synth", s(&cfg), "--out", s(&synth_dir)])), 0);
    let proto = synth_dir.join("protocol.json");
    let out = scalesync(&["simulate", s(&cfg), "--protocol", s(&proto), "--out", s(&sim_dir)]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(&proto).unwrap(), fs::read(sim_dir.join("protocol.json")).unwrap());
    let out = scalesync(&["sweep", s(&cfg), "--protocol", s(&proto), "--out", s(&sim_dir)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("PASS"));
    let report = read_json(&sim_dir.join("sweep.json"));
    assert_eq!(report["grid"].as_array().unwrap().len(), 160);
    assert_eq!(report["pass"], true);
}

#[test]
fn infeasible_gain_with_override_diverges() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "dt_full.json", |v| {
        v["graph"] = "cycle(60)".into();
        v["gains"] = serde_json::json!({ "epsilon": 5.0, "override_gain_bound": true });
        v["simulation"]["horizon"] = 2000.into();
    });
    let out = scalesync(&["simulate", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_fails_for_triple_epsilon_star() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), "dt_full.json", |v| {
        v["gains"] = serde_json::json!({ "epsilon": 1.5, "override_gain_bound": true });
    });
    let out = scalesync(&["sweep", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn ct_partial_reference_sweep_passes() {
    let tmp = TempDir::new().unwrap();
    let out = scalesync(&["sweep", s(&fixture("ct_case2.json")), "--out", s(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report = read_json(&tmp.path().join("sweep.json"));
    assert_eq!(report["grid"].as_array().unwrap().len(), 200);
}

#[test]
fn edge_list_graph_from_file() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    assert_eq!(code(&scalesync(&["simulate", s(&fixture("ct_edges.json")), "--out", s(&out_dir)])), 0);
    assert_eq!(read_json(&out_dir.join("summary.json"))["agents"], 4);
}

#[test]
fn output_root_env_var_redirects_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scalesync"))
        .args(["synth", s(&fixture("dt_full.json"))])
        .env("SCALESYNC_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("out/dt_full/protocol.json").is_file());
}

#[test]
fn batch_runs_isolated_scenarios() {
    let tmp = TempDir::new().unwrap();
    let a = config_with(tmp.path(), "ct_full.json", |_| {});
    let b = config_with(tmp.path(), "dt_full.json", |_| {});
    let out = scalesync(&["batch", s(&a), s(&b), "--jobs", "2"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(tmp.path().join("out/ct_full/summary.json").is_file());
    assert!(tmp.path().join("out/dt_full/summary.json").is_file());

    let bad = config_with(tmp.path(), "dt_partial_delta_high.json", |_| {});
    assert_eq!(code(&scalesync(&["batch", s(&a), s(&bad)])), 1);
}

#[test]
fn case_two_ct_run_decays() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let out = scalesync(&["simulate", s(&fixture("ct_case2.json")), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(out_dir.join("sync_error.csv")).unwrap();
    let errs: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errs.len(), 51);
    assert!(errs.last().unwrap() < &errs[0]);
    assert!(errs[errs.len() - 1] < errs[errs.len() / 2]);
}
