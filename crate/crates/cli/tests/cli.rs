use std::path::Path;
use std::process::{Command, Output};

use concept_debias::occlusion::{save_occlusion_set, word_spans, Granularity, OcclusionSet};
use ndarray::{Array1, Array2};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_concept-debias"));
    c.arg("--quiet");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn neutralize_rewrites_each_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("in.txt"), "She said he was late.\nEmail me at a@b.com\n").unwrap();
    ok(
        &["neutralize", "--in", "in.txt", "--out", "out.txt", "--report", "rep.jsonl"],
        dir.path(),
    );
    let out = std::fs::read_to_string(dir.path().join("out.txt")).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "They said they was late.");
    assert!(!lines[1].contains('@'));
    let rep = std::fs::read_to_string(dir.path().join("rep.jsonl")).unwrap();
    assert_eq!(rep.lines().count(), 2);
}

#[test]
fn step_by_step_flow_produces_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--n", "600", "--d", "12", "--r-true", "4", "--seed", "3", "--out", "bundle"], d);
    ok(&["decompose", "--bundle", "bundle", "--r", "4", "--out", "basis"], d);
    let train = ["--lr-grid", "0.01", "--max-epochs", "10"];
    for target in ["task", "sensitive"] {
        let mut args = vec!["train-head", "--bundle", "bundle", "--target", target, "--out"];
        let out = format!("heads/{target}");
        args.push(&out);
        args.extend(train);
        ok(&args, d);
    }
    ok(
        &[
            "importance",
            "--basis",
            "basis",
            "--task-head",
            "heads/task",
            "--sensitive-head",
            "heads/sensitive",
            "--bundle",
            "bundle",
            "--n",
            "64",
            "--eval-rows",
            "16",
            "--out",
            "importance.json",
        ],
        d,
    );
    ok(&["rank", "--importance", "importance.json", "--out", "ranking.json"], d);
    let ranking: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("ranking.json")).unwrap()).unwrap();
    assert_eq!(ranking["order"].as_array().unwrap().len(), 4);

    let mut args = vec![
        "sweep",
        "--bundle",
        "bundle",
        "--basis",
        "basis",
        "--importance",
        "importance.json",
        "--ks",
        "0..2",
        "--out",
        "sweep",
    ];
    args.extend(train);
    ok(&args, d);
    let csv = std::fs::read_to_string(d.join("sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(d.join("sweep/sweep.json").exists());
}

#[test]
fn explain_scores_units() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--n", "200", "--d", "6", "--r-true", "3", "--out", "bundle"], d);
    ok(&["decompose", "--bundle", "bundle", "--r", "3", "--out", "basis"], d);
    let tokens: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let set = OcclusionSet {
        document_id: "doc".into(),
        unit_spans: word_spans(&tokens),
        tokens,
        granularity: Granularity::Word,
        base_embedding: Array1::from_elem(6, 1.0),
        variant_embeddings: Array2::from_shape_fn((3, 6), |(i, j)| if i == j { 0.0 } else { 1.0 }),
    };
    save_occlusion_set(&set, &d.join("occ.json")).unwrap();
    ok(
        &[
            "explain",
            "--basis",
            "basis",
            "--occlusions",
            "occ.json",
            "--concept",
            "0",
            "--normalize",
            "max-abs",
            "--html",
            "occ.html",
            "--out",
            "explain.json",
        ],
        d,
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("explain.json")).unwrap()).unwrap();
    assert_eq!(v["units"].as_array().unwrap().len(), 3);
    assert!(std::fs::read_to_string(d.join("occ.html")).unwrap().contains("doc"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // missing input file
    assert_eq!(run(&["rank", "--importance", "nope.json", "--out", "r.json"], d).status.code(), Some(4));
    // rank larger than the embedding dimension
    ok(&["synth", "--n", "100", "--d", "5", "--r-true", "3", "--out", "bundle"], d);
    assert_eq!(
        run(&["decompose", "--bundle", "bundle", "--r", "9", "--out", "basis"], d).status.code(),
        Some(2)
    );
    assert_eq!(run(&["run"], d).status.code(), Some(2));
    // no sweep stage to report on
    assert_eq!(run(&["report", "--dir", "missing"], d).status.code(), Some(2));
}

#[test]
fn run_then_report_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = serde_json::json!({
        "schema_version": 1,
        "input": {"kind": "synthetic", "spec": {"n": 400, "d": 8, "r_true": 4, "seed": 1}},
        "output_dir": "out",
        "decompose": {"r": 4},
        "train": {"lr_grid": [0.01], "max_epochs": 5},
        "importance": {"n": 32, "eval_rows": 8},
        "sweep": {"ks": [0, 1]}
    });
    std::fs::write(d.join("cfg.json"), cfg.to_string()).unwrap();
    ok(&["--config", "cfg.json", "--threads", "1", "run"], d);
    std::fs::remove_file(d.join("out/sweep.csv")).unwrap();
    ok(&["report", "--dir", "out"], d);
    assert!(d.join("out/sweep.csv").exists());
    assert!(d.join("out/manifest.json").exists());
}
