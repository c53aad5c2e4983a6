use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dan")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("stdout line")).expect("json on stdout")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr line")).expect("json on stderr")
}

#[track_caller]
fn ok(out: &Output) {
    assert!(out.status.success(), "status {:?}\nstdout {}\nstderr {}", out.status, String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

const TINY: &str = r#"{"epochs": 2, "batch_size": 16, "learning_rate": 0.001,
  "model": {"input_size": 16, "num_heads": 2, "backbone_widths": [4], "blocks_per_stage": 1}}"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// Synthetic 16px corpus plus a tiny training config.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(&dan(&["synth", "--out", s(&dir.path().join("data")), "--per-class", "10", "--size", "16", "--seed", "4"]));
        std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn train(&self, run: &str, seed: &str) -> PathBuf {
        let out = self.path(run);
        ok(&dan(&[
            "train",
            "--config",
            s(&self.path("tiny.json")),
            "--seed",
            seed,
            "--train",
            s(&self.path("data/train.csv")),
            "--val",
            s(&self.path("data/val.csv")),
            "--out",
            s(&out),
        ]));
        out
    }
}

#[test]
fn end_to_end_smoke_path() {
    let fx = Fixture::new();
    let run = fx.train("run", "1");
    for f in ["last.ckpt", "best.ckpt", "metrics.jsonl", "config.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 4);

    let preds = fx.path("preds.jsonl");
    let predict = dan(&["predict", "--checkpoint", s(&run.join("last.ckpt")), "--manifest", s(&fx.path("data/val.csv")), "--out", s(&preds)]);
    ok(&predict);
    assert_eq!(stdout_json(&predict)["items"], 16);
    let manifest = std::fs::read_to_string(fx.path("data/val.csv")).unwrap();
    let manifest_ids: Vec<&str> = manifest.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let text = std::fs::read_to_string(&preds).unwrap();
    let pred_ids: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(pred_ids, manifest_ids);

    let again = fx.path("preds2.jsonl");
    ok(&dan(&["predict", "--checkpoint", s(&run.join("last.ckpt")), "--manifest", s(&fx.path("data/val.csv")), "--out", s(&again), "--batch-size", "3"]));
    assert_eq!(std::fs::read(&preds).unwrap(), std::fs::read(&again).unwrap());

    let score = fx.path("score.json");
    let eval = dan(&["eval", "--predictions", s(&preds), "--manifest", s(&fx.path("data/val.csv")), "--config", s(&fx.path("tiny.json")), "--out", s(&score)]);
    ok(&eval);
    let report = stdout_json(&eval);
    assert_eq!(report["task"], "expr");
    assert_eq!(report["item_count"], 16);
    assert_eq!(report["breakdown"].as_object().unwrap().len(), 8);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&score).unwrap()).unwrap();
    assert_eq!(saved, report);

    let html = fx.path("report.html");
    ok(&dan(&["report", "--metrics", s(&run.join("metrics.jsonl")), "--score", s(&score), "--out", s(&html)]));
    let page = std::fs::read_to_string(&html).unwrap();
    assert!(page.starts_with("<!DOCTYPE html>"));
    assert_eq!(page.matches("<svg").count(), 3);
    assert!(page.contains("<polyline") && page.contains("Neutral"));
}

#[test]
fn training_is_reproducible_through_the_cli() {
    let fx = Fixture::new();
    let a = fx.train("a", "9");
    let b = fx.train("b", "9");
    assert_eq!(std::fs::read(a.join("last.ckpt")).unwrap(), std::fs::read(b.join("last.ckpt")).unwrap());
    let c = fx.train("c", "10");
    assert_ne!(std::fs::read(a.join("last.ckpt")).unwrap(), std::fs::read(c.join("last.ckpt")).unwrap());
}

#[test]
fn task_mismatch_is_refused_before_any_output() {
    let fx = Fixture::new();
    let run = fx.train("run", "1");
    let out = fx.path("va.jsonl");
    let r = dan(&["predict", "--checkpoint", s(&run.join("last.ckpt")), "--task", "va", "--manifest", s(&fx.path("data/val.csv")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(stderr_json(&r)["error"], "task_mismatch");
    assert!(!out.exists());
}

#[test]
fn unreadable_images_become_error_records() {
    let fx = Fixture::new();
    let run = fx.train("run", "1");
    let manifest = std::fs::read_to_string(fx.path("data/val.csv")).unwrap();
    let victim = manifest.lines().nth(2).unwrap().split(',').next().unwrap().to_string();
    std::fs::remove_file(fx.path("data").join(&victim)).unwrap();
    let out = fx.path("p.jsonl");
    let r = dan(&["predict", "--checkpoint", s(&run.join("last.ckpt")), "--manifest", s(&fx.path("data/val.csv")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let err = stderr_json(&r);
    assert_eq!(err["error"], "predict_failures");
    assert_eq!(err["details"]["failed"][0], victim.as_str());
    let lines: Vec<Value> = std::fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 16);
    assert!(lines[1]["error"].is_string() && lines[1].get("probs").is_none());

    let e = dan(&["eval", "--predictions", s(&out), "--manifest", s(&fx.path("data/val.csv"))]);
    assert_eq!(e.status.code(), Some(1));
    let err = stderr_json(&e);
    assert_eq!(err["error"], "missing_predictions");
    assert_eq!(err["details"]["missing"][0], victim.as_str());
}

#[test]
fn ensemble_eval_from_checkpoints_and_prediction_files() {
    let fx = Fixture::new();
    let runs: Vec<PathBuf> = ["1", "2", "3"].iter().map(|seed| fx.train(&format!("m{seed}"), seed)).collect();
    let val = fx.path("data/val.csv");
    let mut args = vec!["ensemble-eval".to_string(), "--manifest".into(), s(&val).into(), "--voted".into(), s(&fx.path("voted.jsonl")).into()];
    for r in &runs {
        args.push("--checkpoint".into());
        args.push(s(&r.join("last.ckpt")).into());
    }
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = dan(&argv);
    ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["members"].as_array().unwrap().len(), 3);
    assert_eq!(report["ensemble"]["item_count"], 16);
    assert_eq!(report["ensemble_at_least_worst"], report["ensemble"]["score"].as_f64().unwrap() >= report["worst_member"].as_f64().unwrap());

    let mut files = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let p = fx.path(&format!("m{i}.jsonl"));
        ok(&dan(&["predict", "--checkpoint", s(&r.join("last.ckpt")), "--manifest", s(&val), "--out", s(&p)]));
        files.push(p);
    }
    let from_files = dan(&[
        "ensemble-eval", "--manifest", s(&val),
        "--predictions", s(&files[0]), "--predictions", s(&files[1]), "--predictions", s(&files[2]),
        "--voted", s(&fx.path("voted2.jsonl")),
    ]);
    ok(&from_files);
    assert_eq!(stdout_json(&from_files)["ensemble"]["score"], report["ensemble"]["score"]);
    assert_eq!(std::fs::read(fx.path("voted.jsonl")).unwrap(), std::fs::read(fx.path("voted2.jsonl")).unwrap());

    let single = dan(&["ensemble-eval", "--manifest", s(&val), "--predictions", s(&files[0]), "--voted", s(&fx.path("one.jsonl"))]);
    ok(&single);
    assert_eq!(std::fs::read(&files[0]).unwrap(), std::fs::read(fx.path("one.jsonl")).unwrap());

    let bad = dan(&["ensemble-eval", "--manifest", s(&val), "--predictions", s(&files[0]), "--predictions", s(&files[1]), "--weights", "1,2,3"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(stderr_json(&bad)["error"], "config");
}

#[test]
fn gradcheck_passes_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("g.json");
    let out = dan(&["gradcheck", "--out", s(&report)]);
    ok(&out);
    let json = stdout_json(&out);
    assert_eq!(json["pass"], true);
    assert!(json["report"]["checks"].as_array().unwrap().len() >= 20);
    assert!(report.exists());

    let strict = dan(&["gradcheck", "--instances", "2", "--tolerance", "0"]);
    assert_eq!(strict.status.code(), Some(1));
    assert_eq!(stderr_json(&strict)["error"], "gradcheck");
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["eval", "--bogus"][..],
        &["frobnicate"],
        &["predict", "--manifest", "m.csv"],
        &["synth"],
        &["ensemble-eval", "--manifest", "m.csv"],
        &["eval", "--predictions", "p", "--manifest", "m", "--mode", "sideways"],
    ] {
        let out = dan(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn operational_errors_exit_1_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"learning_rte": 0.1}"#).unwrap();
    let out = dan(&["train", "--config", s(&bad_cfg), "--train", "nowhere.csv", "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("learning_rte"));

    let missing = dan(&["eval", "--predictions", s(&dir.path().join("none.jsonl")), "--manifest", "x.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(stderr_json(&missing)["error"], "io");

    let corrupt = dir.path().join("c.ckpt");
    std::fs::write(&corrupt, b"DANCKPT\0garbage").unwrap();
    let ck = dan(&["predict", "--checkpoint", s(&corrupt), "--manifest", "x.csv", "--out", s(&dir.path().join("p.jsonl"))]);
    assert_eq!(ck.status.code(), Some(1));
    assert_eq!(stderr_json(&ck)["error"], "checkpoint");
}
