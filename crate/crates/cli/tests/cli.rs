use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use causa_cli::{run, Cli, Outcome, SWEEP_CSV};
use clap::Parser;

fn causa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_causa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64) -> PathBuf {
    let out = causa(&["synth", "--out", s(dir), "--n", "60", "--seed", &seed.to_string()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("manifest.json")
}

const SMALL: [&str; 6] = ["--m", "3", "--knn", "4", "--max-iter", "2"];

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("a"), 3);
    synth(&tmp.path().join("b"), 3);
    let a = files(&tmp.path().join("a"));
    assert_eq!(a, files(&tmp.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"roles.csv") && names.contains(&"labels.csv"));
    let roles = String::from_utf8(a.iter().find(|(n, _)| n == "roles.csv").unwrap().1.clone()).unwrap();
    assert!(roles.lines().any(|l| l == "feature_index,view,role"));
    assert_eq!(roles.lines().filter(|l| l.ends_with(",causal")).count(), 20);
    synth(&tmp.path().join("c"), 4);
    assert_ne!(a, files(&tmp.path().join("c")));
}

#[test]
fn fit_rank_eval_round() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), 1);
    let fit_dir = tmp.path().join("fit");
    let mut args = vec!["fit", "--manifest", s(&manifest), "--out", s(&fit_dir)];
    args.extend(SMALL);
    let out = causa(&args);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "ranking.json", "confounders.json", "checkpoint/checkpoint.json", "checkpoint/checkpoint.bin"] {
        assert!(fit_dir.join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(fit_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("# causa "));
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3);

    let ranked = tmp.path().join("ranked.json");
    let out = causa(&["rank", "--checkpoint", s(&fit_dir.join("checkpoint")), "--out", s(&ranked)]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&ranked).unwrap()).unwrap();
    let fitted: serde_json::Value = serde_json::from_slice(&fs::read(fit_dir.join("ranking.json")).unwrap()).unwrap();
    assert_eq!(doc["views"], fitted["views"]);
    assert_eq!(doc["views"][0]["features"].as_array().unwrap().len(), 420);

    let eval_dir = tmp.path().join("eval");
    let roles = tmp.path().join("data/roles.csv");
    let out = causa(&[
        "eval", "--manifest", s(&manifest), "--checkpoint", s(&fit_dir.join("checkpoint")), "--out", s(&eval_dir),
        "--ratios", "0.1,0.5", "--restarts", "3", "--roles", s(&roles),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "ratio,acc_mean,acc_std,nmi_mean,nmi_std,precision,recall");
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r.split(',').all(|c| !c.is_empty())));
}

#[test]
fn converged_fit_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), 2);
    let fit_dir = tmp.path().join("fit");
    let out = causa(&[
        "fit", "--manifest", s(&manifest), "--out", s(&fit_dir), "--m", "3", "--ablation", "no-causal", "--tol", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_outputs_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), 5);
    for name in ["one", "two"] {
        let dir = tmp.path().join(name);
        let mut args = vec!["fit", "--manifest", s(&manifest), "--out", s(&dir), "--seed", "7"];
        args.extend(SMALL);
        causa(&args);
    }
    for f in ["trace.csv", "ranking.json", "confounders.json", "checkpoint/checkpoint.bin"] {
        assert_eq!(fs::read(tmp.path().join("one").join(f)).unwrap(), fs::read(tmp.path().join("two").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = causa(&["fit", "--manifest", s(&tmp.path().join("missing.json")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let manifest = synth(&tmp.path().join("data"), 1);
    let out = causa(&["fit", "--manifest", s(&manifest), "--out", s(tmp.path()), "--m", "999"]);
    assert_eq!(out.status.code(), Some(1));
    let out = causa(&["rank", "--checkpoint", s(tmp.path()), "--out", s(&tmp.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

fn sweep(manifest: &Path, out: &Path, extra: &[&str]) -> anyhow::Result<Outcome> {
    let mut args = vec![
        "causa", "sweep", "--manifest", s(manifest), "--out", s(out), "--grid", "0.1,1", "--ratios", "0.5",
        "--restarts", "2", "--jobs", "2",
    ];
    args.extend(SMALL);
    args.extend(extra);
    run(Cli::try_parse_from(args).unwrap())
}

#[test]
fn sweep_resumes_missing_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("data"), 1);
    let out = tmp.path().join("sweep");
    sweep(&manifest, &out, &[]).unwrap();
    let path = out.join(SWEEP_CSV);
    let full = fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = full.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 8);
    assert!(rows[1].starts_with("0.1,0.1,0.1,"));

    let truncated: String = full.lines().filter(|l| !l.starts_with("1.0,1.0,")).map(|l| format!("{l}\n")).collect();
    fs::write(&path, truncated).unwrap();
    sweep(&manifest, &out, &[]).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), full);

    let err = sweep(&manifest, &out, &["--seed", "9"]).unwrap_err();
    assert!(err.to_string().contains("different configuration"));
}
