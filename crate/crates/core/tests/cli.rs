//! End-to-end CLI behavior through the library entry point: artifact
//! creation, exit codes, and deterministic outputs.

use std::fs;
use std::path::Path;

use mpcnet_core::cli::run;

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["mpcnet"];
    argv.extend_from_slice(args);
    run(argv)
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "train.iterations = 120\n\
         train.rollout = 0.5\n\
         train.jobs = 2\n\
         train.gen_every = 100\n\
         train.metrics_decimation = 40\n\
         train.deterministic = true\n\
         gait.name = trot-analog\n\
         policy.experts = 3\n\
         policy.expert_hidden = 8\n\
         policy.gating_hidden = 6\n",
    )
    .unwrap();
    path
}

#[test]
fn train_writes_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run1");
    let code = cli(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--loss",
        "l3",
    ]);
    assert_eq!(code, 0);
    assert!(out.join("policy.ckpt").exists());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iteration,constraint_violation,cost,survival_time,completed"));
    assert_eq!(metrics.lines().count(), 1 + 3); // header + 120/40 records

    // eval the checkpoint
    let eval_out = dir.path().join("eval1");
    let code = cli(&[
        "eval",
        "--checkpoint",
        out.join("policy.ckpt").to_str().unwrap(),
        "--gait",
        "trot-analog",
        "--disturbance",
        "0.1",
        "--duration",
        "1.0",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let eval = fs::read_to_string(eval_out.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 2);

    // inspect it
    let code = cli(&["inspect", "--checkpoint", out.join("policy.ckpt").to_str().unwrap()]);
    assert_eq!(code, 0);
}

#[test]
fn deterministic_runs_produce_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let code = cli(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "11",
            "--deterministic",
        ]);
        assert_eq!(code, 0);
    }
    let ckpt_a = fs::read(out_a.join("policy.ckpt")).unwrap();
    let ckpt_b = fs::read(out_b.join("policy.ckpt")).unwrap();
    assert_eq!(ckpt_a, ckpt_b, "checkpoints must be bitwise identical");
    let m_a = fs::read(out_a.join("metrics.csv")).unwrap();
    let m_b = fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(m_a, m_b, "metrics must be bitwise identical");
}

#[test]
fn missing_config_is_a_usage_error() {
    assert_eq!(cli(&["train"]), 1);
    assert_eq!(cli(&["bench-ablation"]), 1);
}

#[test]
fn unknown_flags_and_commands_are_usage_errors() {
    assert_eq!(cli(&["train", "--confgi", "x"]), 1);
    assert_eq!(cli(&["fly"]), 1);
    assert_eq!(cli(&["eval"]), 1); // missing required --checkpoint
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["train", "--help"]), 0);
}

#[test]
fn solve_dumps_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let code = cli(&[
        "solve",
        "--gait",
        "walk",
        "--offset-z",
        "0.02",
        "--dump",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time,x0,x1,x2,x3,x4,x5,u0,u1,u2,u3,u4,u5,cost"
    );
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 14);
    // 0.6 s horizon at dt 0.0025 -> 240 input knots
    assert_eq!(text.lines().count(), 241);
}

#[test]
fn bad_config_reports_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "loss.betta = 2.0\n").unwrap();
    let code = cli(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 1);
}
