use std::path::PathBuf;
use std::process::{Command, Output};

fn drmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drmdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = drmdp(&all);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("drmdp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn gap_example_reports_quarter() {
    let v = json(&["solve", "examples/ex_2_2.json"]);
    let k = &v["kernel"];
    assert!((k["gap"].as_f64().unwrap() - 0.25).abs() < 1e-7);
    assert!((k["primal_values"][0]["sA"].as_f64().unwrap() - 0.5).abs() < 1e-7);
    assert!((k["dual_values"][0]["sA"].as_f64().unwrap() - 0.25).abs() < 1e-7);
    assert_eq!(k["strong_duality"], false);
}

#[test]
fn singleton_has_no_gap() {
    let v = json(&["solve", "examples/singleton.json"]);
    assert!(v["kernel"]["gap"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["kernel"]["worst_case_kernel"], "uniform");
}

#[test]
fn primal_and_dual_flags_select_one_recursion() {
    let p = json(&["solve", "ex_2_2", "--primal"]);
    assert!(p["kernel"].get("dual_values").is_none());
    let d = json(&["solve", "ex_2_2", "--dual"]);
    assert!(d["kernel"].get("primal_values").is_none());
    assert_eq!(drmdp(&["solve", "ex_2_2", "--primal", "--dual"]).status.code(), Some(2));
}

#[test]
fn missing_file_exits_2() {
    let o = drmdp(&["solve", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
}

#[test]
fn malformed_and_invalid_files_exit_2() {
    let bad = scratch("bad.json", "{ not json");
    assert_eq!(drmdp(&["solve", bad.to_str().unwrap()]).status.code(), Some(2));

    let text = drmdp::fixtures::source("ex_2_2").unwrap().replace("0.75", "0.95");
    let invalid = scratch("invalid.json", &text);
    let o = drmdp(&["solve", invalid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: invalid"));
}

#[test]
fn check_reports_worst_case_and_convexity() {
    let a = stdout(&drmdp(&["check", "ex_2_1"]));
    assert!(a.contains("worst-case kernel: HOLDS"), "{a}");
    assert!(a.contains("aR (0.666667, 0.333333)"), "{a}");
    let b = stdout(&drmdp(&["check", "ex_2_2"]));
    assert!(b.contains("worst-case kernel: FAILS"), "{b}");
    assert!(b.contains("convex marginal: FALSE at (1, sA)"), "{b}");
    assert!(!b.contains("gap"), "check prints no solution");
}

#[test]
fn oracle_matches_game_on_grid() {
    let v = json(&["oracle", "ex_2_3", "--policy-grid", "100"]);
    let k = &v["kernel"];
    let game = k["game_primal"].as_f64().unwrap();
    let stat = k["static_primal"].as_f64().unwrap();
    assert!((game - stat).abs() <= 0.02);
    assert_eq!(k["primal_equivalent"], true);
}

#[test]
fn oversized_enumeration_exits_4() {
    let o = drmdp(&["oracle", "ex_2_1", "--max-enum", "1"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn bad_oracle_settings_exit_2() {
    assert_eq!(drmdp(&["oracle", "ex_2_1", "--policy-grid", "0"]).status.code(), Some(2));
    assert_eq!(drmdp(&["oracle", "ex_2_1", "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn examples_list_and_run() {
    let list = stdout(&drmdp(&["examples", "list"]));
    let names: Vec<&str> = list.lines().collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"ex_2_2"));
    let o = drmdp(&["examples", "run", "all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 7);
    assert_eq!(drmdp(&["examples", "run", "nope"]).status.code(), Some(2));
}

#[test]
fn every_mode_runs_on_every_example() {
    for name in drmdp::fixtures::names() {
        for cmd in ["solve", "check"] {
            let o = drmdp(&[cmd, name]);
            assert_eq!(o.status.code(), Some(0), "{cmd} {name}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
}

#[test]
fn json_output_is_byte_identical() {
    for args in [["solve", "fig_2_sr"], ["check", "soc_demo"], ["oracle", "avar_demo"]] {
        let mut a = args.to_vec();
        a.extend(["--format", "json"]);
        assert_eq!(drmdp(&a).stdout, drmdp(&a).stdout);
    }
}
