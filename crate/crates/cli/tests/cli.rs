//! End-to-end tests of the `paircal` binary: the gen → run → report
//! pipeline, the config format, and the exit-code contract.

use std::path::PathBuf;
use std::process::Command;

fn paircal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paircal"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("paircal-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn gen_run_report_pipeline() {
    let dir = workdir("pipeline");
    let cfg = dir.join("sim.cfg");
    std::fs::write(&cfg, "population_size = 120\nn_init = 10\nn_committee = 3\n").unwrap();
    let data = dir.join("pairs.csv");
    let results = dir.join("results.jsonl");
    let summary = dir.join("summary.csv");
    let _ = std::fs::remove_file(&results);

    let out = paircal()
        .args(["gen", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&data)
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = paircal_core::datagen::load_pairs_csv(&data).unwrap();
    assert_eq!(ds.rows.len(), 120);

    for design in ["conventional", "robustcal"] {
        let out = paircal()
            .args([
                "run", "--design", design, "--budget", "60", "--alpha", "0.05", "--gamma", "0.2",
                "--runs", "3", "--seed", "5", "--parallelism", "1",
            ])
            .arg("--config")
            .arg(&cfg)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&results)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&results).unwrap();
    assert_eq!(text.lines().count(), 6, "two runs x three replications");

    let out = paircal()
        .args(["report", "--in"])
        .arg(&results)
        .arg("--out")
        .arg(&summary)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&summary).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("design,budget,n_runs,rejection_rate"));
    assert_eq!(lines.count(), 2, "one aggregate row per design");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn synthetic_run_without_data_flag() {
    let dir = workdir("synth");
    let results = dir.join("results.jsonl");
    let out = paircal()
        .args([
            "run", "--design", "theory", "--budget", "80", "--runs", "2", "--seed", "1",
        ])
        .arg("--out")
        .arg(&results)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_design_exits_2() {
    let out = paircal()
        .args(["run", "--design", "bogus", "--budget", "100", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_key_exits_2() {
    let dir = workdir("badcfg");
    let cfg = dir.join("sim.cfg");
    std::fs::write(&cfg, "not_a_key = 1\n").unwrap();
    let out = paircal()
        .args(["run", "--design", "conventional", "--budget", "100", "--runs", "1"])
        .arg("--config")
        .arg(&cfg)
        .args(["--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_data_file_exits_2() {
    let out = paircal()
        .args([
            "run", "--design", "conventional", "--budget", "100", "--runs", "1", "--data",
            "/nonexistent/pairs.csv", "--out", "/dev/null",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn budget_below_n_init_exits_2() {
    let out = paircal()
        .args([
            "run", "--design", "robustcal", "--budget", "40", "--runs", "1", "--out", "/dev/null",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_results_file_exits_3() {
    let dir = workdir("badjsonl");
    let results = dir.join("results.jsonl");
    std::fs::write(&results, "{not json}\n").unwrap();
    let out = paircal()
        .args(["report", "--in"])
        .arg(&results)
        .args(["--out"])
        .arg(dir.join("summary.csv"))
        .output()
        .unwrap();
    // parse errors in a results file are input errors
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
