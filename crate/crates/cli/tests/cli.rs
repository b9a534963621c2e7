//! The `dppo` binary's subcommands and exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dppo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dppo"))
        .args(args)
        .env("DPPO_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn verify_passes_and_summarizes() {
    let o = dppo(&["verify", "--instances", "40", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("ok")).count(), 5, "{out}");
    assert!(out.contains("40 instances"), "{out}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&dppo(&[])), 1);
    assert_eq!(code(&dppo(&["frobnicate"])), 1);
    assert_eq!(code(&dppo(&["verify", "--instances", "0"])), 1);
    assert_eq!(code(&dppo(&["--help"])), 0);
}

#[test]
fn train_without_env_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = dppo(&["train", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(err.contains("env_id") && err.contains("Usage"), "{err}");
}

#[test]
fn bad_config_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "env_id = chain:4\ndropout.r = 1.5\n").unwrap();
    let o = dppo(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(err.contains("line 2") && err.contains("r must lie in [0,1]"), "{err}");
}

fn small_train(dir: &Path) -> Output {
    let cfg = dir.join("c.conf");
    fs::write(
        &cfg,
        "# tiny chain run\nenv_id = chain:4\nactors = 2\nhorizon = 16\nminibatch_size = 8\ntotal_steps = 96\nnetwork.trunk = 8\n",
    )
    .unwrap();
    let out = dir.join("run");
    dppo(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "lr0=0.001",
    ])
}

#[test]
fn train_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_train(dir.path());
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let run = dir.path().join("run");
    let resolved = fs::read_to_string(run.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 4") && resolved.contains("lr0 = 0.001"), "{resolved}");
    let ckpt = run.join("checkpoints/ckpt_3.bin");
    assert!(ckpt.exists());

    let e = dppo(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--env", "chain:4", "--episodes", "3", "--seed", "1"]);
    assert_eq!(code(&e), 0, "{}", text(&e.stderr));
    assert!(text(&e.stdout).contains("mean return"));
    let mismatch = dppo(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--env", "chain:6", "--episodes", "1", "--seed", "1"]);
    assert_eq!(code(&mismatch), 1);

    let plots = dir.path().join("plots");
    let metrics = run.join("metrics.csv");
    let p = dppo(&["plot", "--metrics", metrics.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(code(&p), 0, "{}", text(&p.stderr));
    let first = (fs::read(plots.join("returns.svg")).unwrap(), fs::read(plots.join("variance.svg")).unwrap());
    dppo(&["plot", "--metrics", metrics.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    let second = (fs::read(plots.join("returns.svg")).unwrap(), fs::read(plots.join("variance.svg")).unwrap());
    assert_eq!(first, second);
}

#[test]
fn plot_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    fs::write(
        &metrics,
        "global_step,update,epoch,mean_return,surrogate_variance,policy_loss,value_loss,entropy,kept_count,dropped_phi_pos_mean,dropped_phi_neg_mean,lr\n\
         512,0,0,20,1.5,-0.1,3,0.69,410,0.2,-0.3,0.00025\n\
         1024,1,0,25,2.5,-0.2,2,0.68,410,,,0.0002\n",
    )
    .unwrap();
    let out = dir.path().join("plots");
    let o = dppo(&["plot", "--metrics", metrics.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    for name in ["returns.svg", "variance.svg"] {
        let svg = fs::read_to_string(out.join(name)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"), "{name}");
        assert_eq!(svg.matches("<polyline").count(), 1, "{name}");
    }
}

#[test]
fn plot_rejects_malformed_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    fs::write(&metrics, "not,a,metrics,file\n").unwrap();
    let o = dppo(&["plot", "--metrics", metrics.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_checkpoint_is_runtime_fault() {
    let o = dppo(&["eval", "--checkpoint", "/nonexistent/ckpt.bin", "--env", "cartpole", "--episodes", "1", "--seed", "0"]);
    assert_eq!(code(&o), 3);
}
