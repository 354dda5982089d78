use std::path::Path;
use std::process::{Command, Output};

fn dexpipe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dexpipe"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = dexpipe(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a structured error line: {stderr}"))
}

#[test]
fn empty_mix_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dexpipe(&["train-bc", "--mix", "0,0", "--data", ".", "--out", "m.dxpm"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mix"));
    let out = dexpipe(&["train-rl", "--skill", "5", "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failures_exit_nonzero_with_a_structured_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dexpipe(&["eval", "--trials", "3", "--models", "missing", "--report", "r.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"]["kind"], "io");
    std::fs::write(dir.path().join("bad.txt"), "{\"x\": 1}\n").unwrap();
    let out = dexpipe(&["report", "--in", "bad.txt"], dir.path());
    assert_eq!(error_line(&out)["error"]["kind"], "input");
}

#[test]
fn datagen_is_reproducible_and_refuses_non_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["datagen", "--n", "3", "--out", "a", "--seed", "4"], p);
    let out = Command::new(env!("CARGO_BIN_EXE_dexpipe"))
        .args(["datagen", "--n", "3", "--out", "b", "--seed", "4"])
        .current_dir(p)
        .env("DEXPIPE_JOBS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["manifest.json", "episode_00000.json", "episode_00002.json", "datagen_config.json"] {
        assert_eq!(std::fs::read(p.join("a").join(f)).unwrap(), std::fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    let out = dexpipe(&["datagen", "--n", "1", "--out", "a"], p);
    assert_eq!(error_line(&out)["error"]["kind"], "output_not_empty");
    ok(&["datagen", "--n", "1", "--out", "a", "--force"], p);
    let out = dexpipe(&["datagen", "--n", "2", "--nominal", "--out", "n", "--seed", "4"], p);
    assert!(out.status.success());
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["episodes"], 2);
}

#[test]
fn train_distill_eval_and_report_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("bc.toml"), "epochs = 2\nhidden = [16]\n").unwrap();
    std::fs::write(
        p.join("rl.toml"),
        "hidden = [16]\nupdates = 2\nepisodes_per_update = 4\neval_episodes = 4\nmin_success = 0.0\n\n[distill]\nrounds = 1\nepisodes_per_round = 4\nepochs = 2\nmin_ratio = 0.0\n",
    )
    .unwrap();
    std::fs::write(
        p.join("ablate.toml"),
        "setups = [[0, 3], [6, 3], [6, 0]]\neval_seeds = 2\n\n[bc]\nepochs = 1\nhidden = [8]\n",
    )
    .unwrap();
    ok(&["datagen", "--n", "6", "--out", "data/sim"], p);
    ok(&["datagen", "--n", "3", "--nominal", "--out", "data/nominal"], p);
    ok(&["train-bc", "--mix", "6,3", "--data", "data", "--out", "models/grasp.dxpm", "--config", "bc.toml"], p);
    assert!(p.join("models/grasp.config.json").exists());
    ok(&["train-rl", "--skill", "1", "--out", "runs/t1", "--seed", "2", "--config", "rl.toml"], p);
    for f in ["teacher.dxpm", "teacher_value.dxpm", "metrics.jsonl", "report.json", "config.json"] {
        assert!(p.join("runs/t1").join(f).exists(), "{f}");
    }
    let out = ok(&["distill", "--teacher", "runs/t1/teacher.dxpm", "--out", "models/inhand1.dxpm"], p);
    assert!(out.contains("inhand1"));
    for k in 2..=4 {
        std::fs::copy(p.join("models/inhand1.dxpm"), p.join(format!("models/inhand{k}.dxpm"))).unwrap();
    }
    let table = ok(&["eval", "--trials", "3", "--models", "models", "--report", "eval.jsonl"], p);
    assert!(table.lines().next().unwrap().contains("inhand4"));
    let report = std::fs::read_to_string(p.join("eval.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 4);
    let printed = ok(&["report", "--in", "eval.jsonl"], p);
    assert_eq!(printed.lines().next().unwrap().split('|').count(), 6);
    let metrics = ok(&["report", "--in", "runs/t1/metrics.jsonl"], p);
    assert_eq!(metrics.lines().count(), 3);

    let table = ok(&["ablate-mix", "--data", "data", "--report", "ablate.jsonl", "--config", "ablate.toml"], p);
    let labels: Vec<String> = std::fs::read_to_string(p.join("ablate.jsonl"))
        .unwrap()
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["label"].as_str().map(String::from))
        .collect();
    assert_eq!(labels, ["0/3", "6/3", "6/0"]);
    assert_eq!(table.lines().count(), 4);
}
