use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_teamreach"));
    c.env_remove("TEAMREACH_SMT_SOLVER").env_remove("TEAMREACH_SMT_ARGS").env_remove("TEAMREACH_SMT_TIMEOUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["-o", path.to_str().unwrap()]);
    let o = run(&full);
    assert!(o.status.success(), "gen failed: {}", String::from_utf8_lossy(&o.stderr));
    path
}

fn door(dir: &Path) -> PathBuf {
    gen(dir, "door.game", &["--family", "builtin", "--name", "door"])
}

fn z3_available() -> bool {
    Command::new("z3").arg("-version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn jamming_shared_value() {
    let dir = TempDir::new().unwrap();
    let g = gen(dir.path(), "g.game", &["--family", "jamming", "--C", "2", "--B", "1,1"]);
    let o = run(&["solve-threshold", g.to_str().unwrap(), "--mode", "sh"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let init = out.lines().find(|l| l.starts_with("[1,1] ")).expect("initial state row");
    assert_eq!(init, "[1,1] 0.250000 0.250000");
}

#[test]
fn door_almost_sure_independent_is_no() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["solve-almost-sure", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "no");
}

#[test]
fn door_almost_sure_merged_writes_certificate() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let cert = dir.path().join("cert.json");
    let o = run(&["solve-almost-sure", g.to_str().unwrap(), "--merge", "--certificate", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cert).unwrap()).unwrap();
    assert_eq!(doc["rank"]["s0"], 1);
    assert_eq!(doc["rank"]["s_goal"], 0);
}

#[test]
fn door_check_threshold_formula() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["check", g.to_str().unwrap(), "--formula", "<<1,2>>^ind_>3/10 F goal"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("s_fail false"));
}

#[test]
fn door_check_almost_sure_formulas() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["check", g.to_str().unwrap(), "--formula", "<<1,2>>^ind_almost F goal"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["check", g.to_str().unwrap(), "--formula", "<<1,2>>^sh_almost F goal"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn threshold_exit_codes() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let report = dir.path().join("r.json");
    let o = run(&["solve-threshold", g.to_str().unwrap(), "--t", "3/10", "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["verdict"], "yes");
    assert!(r["timings_ms"]["total"].is_number());
    let o = run(&["solve-threshold", g.to_str().unwrap(), "--t", "1/2"]);
    assert_eq!(o.status.code(), Some(10));
}

#[test]
fn threshold_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let a = run(&["solve-threshold", g.to_str().unwrap(), "--seed", "7", "--jobs", "1"]);
    let b = run(&["solve-threshold", g.to_str().unwrap(), "--seed", "7", "--jobs", "4"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn validate_reports_problems() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["validate", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("ok: 3 states"));
    let bad = dir.path().join("bad.game");
    std::fs::write(&bad, "{\"version\": 1}").unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    assert_eq!(run(&["solve-threshold", g.to_str().unwrap(), "--tolerance", "0"]).status.code(), Some(2));
    assert_eq!(run(&["solve-threshold", g.to_str().unwrap(), "--t", "3/2"]).status.code(), Some(2));
    assert_eq!(run(&["check", g.to_str().unwrap(), "--formula", "<<1>>^ind_>1/2 G goal"]).status.code(), Some(2));
    assert_eq!(run(&["solve-threshold", "/nonexistent.game"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missing_solver_is_a_backend_error() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["bisect", g.to_str().unwrap(), "--solver", "/nonexistent/solver"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn export_cnf_and_smt() {
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["export-cnf", g.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l.starts_with("p cnf ")));
    let o = run(&["export-smt", g.to_str().unwrap(), "--t", "3/10"]);
    let text = stdout(&o);
    assert!(text.contains("(set-logic QF_NRA)"));
    assert!(text.contains("(check-sat)"));
    let o = run(&["export-smt", g.to_str().unwrap(), "--local", "s0", "--c", "0.24"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("y_0_0"));
}

#[test]
fn generated_counts() {
    let dir = TempDir::new().unwrap();
    let g = gen(dir.path(), "p1.game", &["--family", "pursuit", "--scenario", "1"]);
    let o = run(&["validate", g.to_str().unwrap()]);
    assert!(stdout(&o).contains("transitions"), "{}", stdout(&o));
    let g = gen(dir.path(), "c.game", &["--family", "clique", "--path", "3", "--k", "3"]);
    let o = run(&["solve-almost-sure", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bisect_brackets_door_value() {
    if !z3_available() {
        eprintln!("z3 not found; skipping");
        return;
    }
    let dir = TempDir::new().unwrap();
    let g = door(dir.path());
    let o = run(&["bisect", g.to_str().unwrap(), "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let nums: Vec<f64> = out.split_whitespace().filter_map(|w| w.parse().ok()).collect();
    assert!(nums[0] <= 1.0 / 3.0 && 1.0 / 3.0 <= nums[1], "{out}");
}
