//! End-to-end runs of the `dgplan` binary.

use std::path::Path;
use std::process::{Command, Output};

fn dgplan(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgplan"))
        .args(args)
        .env("DGPLAN_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn pf_reports_base_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = dgplan(dir.path(), &["pf", "--case", "builtin:ieee33"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("active loss   0.2110 MW"), "{text}");
    assert!(text.contains("buses below 0.95 p.u.: 21"));
    assert_eq!(read(dir.path().join("pf_buses.csv")).lines().count(), 34);
    assert_eq!(read(dir.path().join("pf_branches.csv")).lines().count(), 33);
    let doc: serde_json::Value = serde_json::from_str(&read(dir.path().join("pf.json"))).unwrap();
    assert_eq!(doc["manifest"]["command"], "pf");
    assert!(dir.path().join("pf.manifest.json").exists());
}

#[test]
fn pf_zero_loads_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let o = dgplan(dir.path(), &["pf", "--zero-loads"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("active loss   0.0000 MW"));
    let csv = read(dir.path().join("pf_buses.csv"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1.0000")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dgplan(dir.path(), &["pf", "--case", "does_not_exist.m"]);
    assert_eq!(missing.status.code(), Some(3));

    let bad = dir.path().join("bad.m");
    std::fs::write(&bad, "mpc.baseMVA = 10;\nmpc.bus = [1 3 0 0;];\n").unwrap();
    let parse = dgplan(dir.path(), &["pf", "--case", bad.to_str().unwrap()]);
    assert_eq!(parse.status.code(), Some(4));

    let diverge = dgplan(dir.path(), &["pf", "--max-iter", "1"]);
    assert_eq!(diverge.status.code(), Some(5));

    let usage = dgplan(dir.path(), &["pf", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(2));

    let infeasible = dgplan(
        dir.path(),
        &["allocate", "--n-dg", "1", "--trials", "5", "--top-n", "3"],
    );
    assert_eq!(infeasible.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("widening"));

    let slack_dg = dgplan(dir.path(), &["evaluate", "--dg", "1:1.0"]);
    assert!(!slack_dg.status.success());
}

#[test]
fn loadability_top_n_and_rerun_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = dgplan(dir.path(), &["loadability", "--top-n", "3"]);
    assert!(o.status.success());
    let candidates = read(dir.path().join("candidates.csv"));
    assert_eq!(candidates.lines().count(), 4);
    assert!(candidates.lines().nth(1).unwrap().starts_with("1,2,"));
    let table = read(dir.path().join("loadability.csv"));
    assert_eq!(table.lines().count(), 33);
    let first_json = read(dir.path().join("loadability.json"));

    let o = dgplan(dir.path(), &["loadability", "--top-n", "3"]);
    assert!(o.status.success());
    assert_eq!(read(dir.path().join("loadability.csv")), table);
    assert_eq!(read(dir.path().join("loadability.json")), first_json);
}

#[test]
fn allocate_single_trial_from_candidate_file() {
    let dir = tempfile::tempdir().unwrap();
    let cands = dir.path().join("cands.csv");
    std::fs::write(&cands, "rank,bus,additional_mw\n1,6,1.0\n").unwrap();
    let args = [
        "allocate",
        "--n-dg",
        "1",
        "--trials",
        "1",
        "--seed",
        "4",
        "--candidates-file",
        cands.to_str().unwrap(),
        "--vmin",
        "0.90",
    ];
    let o = dgplan(dir.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = read(dir.path().join("allocate_n1.json"));
    let doc: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(doc["result"]["feasible_trials"], 1);
    assert_eq!(doc["result"]["best"]["dgs"][0]["bus"], 6);
    assert_eq!(doc["manifest"]["seed"], 4);

    let profile = read(dir.path().join("voltage_profile.csv"));
    assert!(profile.starts_with("bus,no_dg,dg1\n"));
    assert_eq!(profile.lines().count(), 34);

    let o = dgplan(dir.path(), &args);
    assert!(o.status.success());
    assert_eq!(read(dir.path().join("allocate_n1.json")), first);
}

#[test]
fn evaluate_reports_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let base = dgplan(dir.path(), &["evaluate"]);
    assert!(base.status.success());
    assert!(stdout(&base).contains("loss reduction 0.00 %"));

    let o = dgplan(
        dir.path(),
        &["evaluate", "--dg", "13:0.802", "--dg", "24:1.091", "--dg", "30:1.054"],
    );
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_str(&read(dir.path().join("evaluate.json"))).unwrap();
    let pct = doc["result"]["loss_reduction_pct"].as_f64().unwrap();
    assert!((pct - 65.5).abs() < 1.0, "{pct}");
    assert_eq!(read(dir.path().join("evaluate_voltage.csv")).lines().count(), 34);
}
