use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stardisc::harness::{CoverageCheck, SelftestReport, TailEstimate};
use stardisc::report::{from_json, parse_csv, to_json};
use stardisc_core::construct::InverseSearch;
use stardisc_core::{BoundReport, ConstructionOutcome, DiscrepancyResult};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stardisc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Serializing the parsed report again gives the same bytes.
fn reserializes<T: serde::Serialize + serde::de::DeserializeOwned>(kind: &str, text: &str) -> T {
    let v: T = from_json(kind, text).unwrap();
    assert_eq!(to_json(kind, &v).unwrap() + "\n", text);
    v
}

#[test]
fn compute_exact_small_set() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.txt", "2 1\n0.25\n0.75\n");
    let o = bin(&["compute", "--points", s(&p), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: DiscrepancyResult = reserializes("discrepancy", &stdout(&o));
    assert_eq!(r.value, 0.25);
    assert!(r.exact);
}

#[test]
fn compute_weighted_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.txt", "3 2\n0.1 0.6\n0.4 0.2\n0.9 0.8\n");
    let w = write(dir.path(), "w.txt", "explicit\n1 0.5\n1,2 1\n");
    let o = bin(&["compute", "--points", s(&p), "--weights", s(&w), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: DiscrepancyResult = reserializes("discrepancy", &stdout(&o));
    assert!(r.witness_subset.is_some() && r.subsets_evaluated + r.subsets_pruned == 3);

    let o = bin(&["--format", "csv", "compute", "--points", s(&p), "--weights", s(&w), "--seed", "1"]);
    let (h, rows) = parse_csv(&stdout(&o)).unwrap();
    let col = h.iter().position(|c| c == "value").unwrap();
    assert_eq!(rows[0][col].parse::<f64>().unwrap(), r.value);
}

#[test]
fn strict_budget_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.txt", "3 2\n0.1 0.6\n0.4 0.2\n0.9 0.8\n");
    let o = bin(&["compute", "--points", s(&p), "--budget", "2", "--strict"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["compute", "--points", s(&p), "--budget", "2", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let o = bin(&["compute", "--points", s(&p), "--trials", "3", "--seed", "4"]);
    let r: DiscrepancyResult = from_json("discrepancy", &stdout(&o)).unwrap();
    assert!(!r.exact);
    assert!(stderr(&o).contains("lower bound"));
}

#[test]
fn malformed_input_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.txt", "2 2\n0.1 0.2\n0.3 nope\n");
    let o = bin(&["compute", "--points", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(bin(&["compute", "--points", "/nonexistent/p.txt"]).status.code(), Some(1));
    assert_eq!(bin(&["compute"]).status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn bound_reports() {
    let o = bin(&["bound", "--id", "hnww", "--d", "4", "--N", "100"]);
    let r: BoundReport = reserializes("bound", &stdout(&o));
    assert!((r.value - 2.0).abs() < 1e-15 && r.clamped == Some(1.0));

    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.txt", "product\ntail geometric ratio=0.5\n");
    let o = bin(&["bound", "--id", "theorem4", "--weights", s(&w)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"kind\":\"theorem4_certificate\""));

    let o = bin(&["bound", "--id", "hps", "--weights", s(&w), "--d", "3", "--N", "10"]);
    assert_eq!(o.status.code(), Some(1), "missing constant");
    let o = bin(&["bound", "--id", "inverse_n_c_hat", "--weights", s(&w), "--d", "4", "--eps", "0.25"]);
    let r: BoundReport = from_json("bound", &stdout(&o)).unwrap();
    assert!(r.value >= 1.0 && r.warnings.iter().any(|w| w.contains("stabil")), "{r:?}");
}

#[test]
fn hps2_check_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.txt", "1 4\n0.3 0.6 0.2 0.9\n");
    let w = write(dir.path(), "w.txt", "product\ntail geometric ratio=1\n");
    let o = bin(&["bound", "--id", "hps2", "--points", s(&p), "--weights", s(&w), "--c", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"holds\":true"));
    let p = write(dir.path(), "q.txt", "1 3\n0.3 0.6 0.2\n");
    let o = bin(&["bound", "--id", "hps2", "--points", s(&p), "--weights", s(&w)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_weights_summary() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.txt", "product\n1 1\n2 0.5\ntail c_over_sqrt_log c=0.5\n");
    let o = bin(&["check-weights", "--weights", s(&w), "--d-max", "16", "--c", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = from_json("weight_check", &stdout(&o)).unwrap();
    assert_eq!(v["kind"], "product");
    assert_eq!(v["non_increasing"], true);
    assert_eq!(v["summability"]["verdict"], "diverges");
    assert!(v["theorem4"].is_null() && v["theorem4_error"].is_string());
}

#[test]
fn construct_writes_points_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.txt", "product\ntail geometric ratio=0.5\n");
    let out = dir.path().join("set.txt");
    let o = bin(&["construct", "--theorem", "1", "--weights", s(&w), "--d", "3", "--N", "32", "--seed", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: ConstructionOutcome = reserializes("construction", &stdout(&o));
    assert!(r.accepted && r.achieved <= r.target);
    let ps = stardisc::io::read_points(&out).unwrap();
    assert_eq!(ps, r.points);
    let side = std::fs::read_to_string(dir.path().join("set.txt.json")).unwrap();
    let v: serde_json::Value = from_json("construction_sidecar", &side).unwrap();
    assert_eq!(v["seed"], 2);
    assert_eq!(v["rule"]["rule"], "theorem1");
}

#[test]
fn exhausted_construction_is_a_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.txt", "product\n1 1\n2 1\n");
    let o = bin(&[
        "construct", "--theorem", "4", "--c-hat", "1e-6", "--weights", s(&w), "--d", "2", "--N", "8", "--seed", "1", "--max-attempts", "3",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let r: ConstructionOutcome = from_json("construction", &stdout(&o)).unwrap();
    assert!(!r.accepted && r.attempts == 3);
}

#[test]
fn tail_and_coverage() {
    let o = bin(&["tail", "--d", "1", "--N", "32", "--t", "1,2,3", "--trials", "400", "--seed", "3", "--K", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: Vec<TailEstimate> = reserializes("tail", &stdout(&o));
    assert_eq!(t.len(), 3);
    assert!(t.iter().all(|e| e.exact && e.trials == 400));

    let o = bin(&["tail", "--d", "1", "--N", "256", "--q", "0.5", "--trials", "200", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c: Vec<CoverageCheck> = reserializes("coverage", &stdout(&o));
    assert!(c[0].holds && c[0].threshold < 1.0);
}

#[test]
fn invn_and_selftest() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.txt", "product\ntail geometric ratio=0.5\n");
    let o = bin(&["invn", "--weights", s(&w), "--d", "2", "--eps", "0.2", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: InverseSearch = reserializes("inverse_search", &stdout(&o));
    assert!(r.achieved <= 0.2 && r.n_achieved <= r.upper_bound_formula.unwrap());

    let o = bin(&["--workers", "2", "selftest", "--instances", "30", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let r: SelftestReport = reserializes("selftest", &stdout(&o));
    assert!(r.passed && r.instances == 30);
}
