use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tscvx::bench::parse_boxplot;
use tscvx::dataset::Dataset;
use tscvx::problem::ProblemConstants;
use tscvx::scvx::ScvxReport;

fn tscvx(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tscvx")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name).display().to_string()
}

fn report(path: &Path) -> ScvxReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn nominal_solve_writes_report_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = tscvx(&["solve", "--nominal", "--trace", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("Converged"));
    let r = report(&dir.path().join("run/report.json"));
    assert!(r.iterations() <= 20);
    let csv = std::fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    let traces = std::fs::read_dir(dir.path().join("run/trace")).unwrap().count();
    assert_eq!(traces, r.iterations());
}

#[test]
fn malformed_instance_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"gamma_gs_deg\": 20,\n  oops}").unwrap();
    let out = tscvx(&["solve", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2 column"), "{}", stderr(&out));
    let missing = tscvx(&["solve", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn iteration_limit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let constants = ProblemConstants { iter_max: 2, ..Default::default() };
    let config = serde_json::json!({ "constants": constants });
    std::fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
    let out = tscvx(&["--config", "cfg.json", "solve", "--nominal", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(dir.path().join("run/report.json").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"sed": 3}"#).unwrap();
    let out = tscvx(&["--config", "cfg.json", "solve", "--nominal"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown field"));
}

#[test]
fn dataset_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let gen = tscvx(&["--seed", "5", "--threads", "1", "gen", "--bases", "3", "-o", "one.jsonl"], p);
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    std::fs::write(p.join("cfg.json"), r#"{"seed": 5}"#).unwrap();
    let gen2 = tscvx(&["--config", "cfg.json", "--threads", "3", "gen", "--bases", "3", "-o", "three.jsonl"], p);
    assert_eq!(gen2.status.code(), Some(0), "{}", stderr(&gen2));
    assert_eq!(std::fs::read(p.join("one.jsonl")).unwrap(), std::fs::read(p.join("three.jsonl")).unwrap());
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("one.timing.json")).unwrap()).unwrap();
    assert_eq!(timing["timings"].as_array().unwrap().len(), 3);

    let aug = tscvx(&["--seed", "1", "augment", "one.jsonl", "-o", "split.jsonl", "--train-ratio", "0.67"], p);
    assert_eq!(aug.status.code(), Some(0), "{}", stderr(&aug));
    let ds = Dataset::load(p.join("split.jsonl")).unwrap();
    assert_eq!(ds.samples.len(), 24);
    assert!(ds.samples.iter().all(|s| s.split.is_some()));

    let unsplit = tscvx(&["export-training", "one.jsonl", "-o", "train"], p);
    assert_eq!(unsplit.status.code(), Some(1));
    let export = tscvx(&["export-training", "split.jsonl", "-o", "train"], p);
    assert_eq!(export.status.code(), Some(0), "{}", stderr(&export));
    assert!(p.join("train/constraints.csv").exists() && p.join("train/solutions.csv").exists());

    let bench = tscvx(&["bench", "split.jsonl", "--methods", "kdtree,nn", "--warmup", "0", "-o", "rep.json"], p);
    assert_eq!(bench.status.code(), Some(0), "{}", stderr(&bench));
    assert!(stderr(&bench).contains("skipping nn"), "{}", stderr(&bench));
    let csv = std::fs::read_to_string(p.join("rep.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("kdtree,")));
    assert!(csv.lines().any(|l| l.starts_with("zeros,")));

    let boxplot = tscvx(&["boxplot", "rep.json", "-o", "box.csv"], p);
    assert_eq!(boxplot.status.code(), Some(0), "{}", stderr(&boxplot));
    let rows = parse_boxplot(&std::fs::read_to_string(p.join("box.csv")).unwrap()).unwrap();
    assert_eq!(rows[0].0, "kdtree/inference_ms");
    assert_eq!(rows[0].1.n, 8);
}

#[test]
fn kdtree_warm_start_from_containing_dataset_needs_no_more_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let gen = tscvx(&["--seed", "9", "gen", "--bases", "2", "--no-augment", "-o", "ds.jsonl"], p);
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    let ds = Dataset::load(p.join("ds.jsonl")).unwrap();
    let sample = ds.samples.iter().find(|s| s.converged).expect("a converged sample");
    let inst = sample.params.to_instance(&ProblemConstants::default());
    std::fs::write(p.join("inst.json"), inst.to_json().unwrap()).unwrap();

    let cold = tscvx(&["solve", "inst.json", "--out", "cold"], p);
    assert_eq!(cold.status.code(), Some(0), "{}", stderr(&cold));
    let warm = tscvx(&["solve", "inst.json", "--warm", "kdtree", "--dataset", "ds.jsonl", "--out", "warm"], p);
    assert_eq!(warm.status.code(), Some(0), "{}", stderr(&warm));
    let (cold, warm) = (report(&p.join("cold/report.json")), report(&p.join("warm/report.json")));
    assert!(!warm.fell_back);
    assert!(warm.iterations() <= cold.iterations(), "{} vs {}", warm.iterations(), cold.iterations());

    let no_data = tscvx(&["solve", "inst.json", "--warm", "kdtree"], p);
    assert_eq!(no_data.status.code(), Some(1));
}

#[test]
fn verify_weights_checks_checksums_shapes_and_parity() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let (model, fixture) = (data("parity_model.tscx"), data("parity_fixture.json"));
    let ok = tscvx(&["verify-weights", &model, "--fixture", &fixture], p);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("parity 10 cases"));

    let wrong_role = tscvx(&["verify-weights", &model, "--role", "solution"], p);
    assert_eq!(wrong_role.status.code(), Some(1));
    assert!(stdout(&wrong_role).contains("expected 16 -> 851"));

    let mut bytes = std::fs::read(&model).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    std::fs::write(p.join("bad.tscx"), bytes).unwrap();
    let bad = tscvx(&["verify-weights", &model, "bad.tscx"], p);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("checksum mismatch"), "{}", stdout(&bad));
    assert!(stdout(&bad).starts_with("ok "));
}
