//! End-to-end trainer behavior on small runs.

use std::fs;

use dppo_core::env::{enumerate_tables, ChainMdp};
use dppo_core::nn::{load_checkpoint, save_checkpoint};
use dppo_core::trainer::{run_update, UpdateContext};
use dppo_core::{
    evaluate, evaluate_params, gae_annotate, train, ActorSet, Activation, AdamState, DropoutConfig, EnvId, Error,
    EpisodeStats, NetworkArchitecture, ParameterVector, TrainConfig,
};
use dppo_core::nn::PolicySnapshot;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chain_config() -> TrainConfig {
    TrainConfig {
        env_id: Some(EnvId::Chain { length: 5 }),
        actors: 4,
        horizon: 16,
        minibatch_size: 16,
        total_steps: 64,
        trunk: vec![8],
        lr0: 1e-3,
        ..TrainConfig::default()
    }
}

fn metrics_rows(dir: &std::path::Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn one_batch_of_steps_is_one_update() {
    let dir = tempfile::tempdir().unwrap();
    let summary = train(&chain_config(), dir.path()).unwrap();
    assert_eq!(summary.updates, 1);
    assert_eq!(summary.global_steps, 64);
    let rows = metrics_rows(dir.path());
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[0] == "64" && r[1] == "0"));
    assert!(dir.path().join("config.resolved").exists());
    assert!(dir.path().join("final_report.txt").exists());
    assert!(dir.path().join("checkpoints/ckpt_1.bin").exists());
    let header = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(header.starts_with(
        "global_step,update,epoch,mean_return,surrogate_variance,policy_loss,value_loss,entropy,kept_count,dropped_phi_pos_mean,dropped_phi_neg_mean,lr\n"
    ));
}

#[test]
fn resolved_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = chain_config();
    train(&config, dir.path()).unwrap();
    let back = dppo_core::parse_config(&dir.path().join("config.resolved"), &[]).unwrap();
    assert_eq!(back, config);
}

#[test]
fn same_seed_same_metrics() {
    let mut config = chain_config();
    config.total_steps = 64 * 5;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&config, a.path()).unwrap();
    train(&config, b.path()).unwrap();
    assert_eq!(
        fs::read(a.path().join("metrics.csv")).unwrap(),
        fs::read(b.path().join("metrics.csv")).unwrap()
    );
    config.seed = 1;
    let c = tempfile::tempdir().unwrap();
    train(&config, c.path()).unwrap();
    assert_ne!(
        fs::read(a.path().join("metrics.csv")).unwrap(),
        fs::read(c.path().join("metrics.csv")).unwrap()
    );
}

#[test]
fn plain_mode_never_shrinks() {
    let mut config = chain_config();
    config.dropout = DropoutConfig::off();
    config.total_steps = 64 * 10;
    config.minibatch_size = 24;
    let dir = tempfile::tempdir().unwrap();
    let summary = train(&config, dir.path()).unwrap();
    assert_eq!(summary.adam_steps, vec![4 * 64usize.div_ceil(24); 10]);
    let rows = metrics_rows(dir.path());
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r[8] == "64" && r[9].is_empty() && r[10].is_empty()));
}

#[test]
fn live_set_shrinks_then_resets() {
    let mut config = chain_config();
    config.total_steps = 64 * 4;
    let dir = tempfile::tempdir().unwrap();
    train(&config, dir.path()).unwrap();
    let rows = metrics_rows(dir.path());
    for update in rows.chunks(4) {
        let kept: Vec<usize> = update.iter().map(|r| r[8].parse().unwrap()).collect();
        assert!(kept.windows(2).all(|w| w[1] <= w[0]), "{kept:?}");
        assert!(kept[0] <= 64);
    }
}

#[test]
fn checkpoint_cadence() {
    let mut config = chain_config();
    config.total_steps = 64 * 5;
    config.checkpoint_every = 2;
    let dir = tempfile::tempdir().unwrap();
    let summary = train(&config, dir.path()).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path().join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["ckpt_2.bin", "ckpt_4.bin", "ckpt_5.bin"]);
    assert!(summary.final_checkpoint.ends_with("ckpt_5.bin"));
    let ckpt = load_checkpoint(&summary.final_checkpoint).unwrap();
    assert_eq!(ckpt.adam.unwrap().step_count, summary.adam_steps.iter().sum::<usize>() as u64);
}

#[test]
fn missing_env_is_usage_error() {
    let mut config = chain_config();
    config.env_id = None;
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(train(&config, dir.path()), Err(Error::Usage(_))));
}

/// Cartpole at the full default batch: each epoch's dropout keeps between
/// `L(1−r) − 4` and `L(1−r) + 2` of `L` live samples (two parts, each
/// dropping within `[r·m − 1, r·m + 2]`).
#[test]
fn default_batch_shrinks_geometrically() {
    let config = TrainConfig {
        env_id: Some(EnvId::CartPole),
        ..TrainConfig::default()
    };
    assert_eq!(config.batch_size(), 2048);
    let envs = (0..config.actors).map(|_| EnvId::CartPole.build().unwrap()).collect();
    let arch = NetworkArchitecture::new(4, config.trunk.clone(), 2, Activation::Tanh).unwrap();
    let mut params = ParameterVector::init(arch, 3);
    let mut actors = ActorSet::new(envs, 3).unwrap();
    let mut stats = EpisodeStats::new(20);
    let mut batch = actors.collect(&PolicySnapshot::new(&params), config.horizon, &mut stats).unwrap();
    gae_annotate(&mut batch, config.gae_lambda, config.gamma).unwrap();
    let mut adam = AdamState::new(params.len());
    let ctx = UpdateContext {
        global_step: 2048,
        update_index: 0,
        mean_return: None,
        lr: config.lr0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = run_update(&mut params, &mut adam, &batch, &config, &ctx, &mut rng).unwrap();
    let mut live = 2048.0;
    for r in &out.records {
        let kept = r.kept_count as f64;
        assert!(kept >= live * 0.8 - 4.0 && kept <= live * 0.8 + 2.0, "live {live} kept {kept}");
        live = kept;
    }
    let expected_steps: usize = out.live_counts.iter().map(|n| n.div_ceil(512)).sum();
    assert_eq!(out.adam_steps, expected_steps);
    assert_eq!(out.live_counts[0], 2048);
}

#[test]
fn flat_policy_evaluates_like_uniform() {
    let arch = NetworkArchitecture::new(5, vec![4], 2, Activation::Tanh).unwrap();
    let params = ParameterVector::zeros(arch);
    let episodes = 20_000;
    let result = evaluate_params(&params, EnvId::Chain { length: 5 }, episodes, 1).unwrap();
    let mdp = ChainMdp::new(5).unwrap().to_finite_mdp();
    let tables = enumerate_tables(&mdp, &vec![vec![0.5, 0.5]; 5], 1.0).unwrap();
    let p = tables.v_values[0];
    // Each return is 0 or 1, so the mean is a Bernoulli estimate of p.
    let se = (p * (1.0 - p) / episodes as f64).sqrt();
    assert!((result.mean - p).abs() < 4.0 * se, "sampled {} vs exact {p}", result.mean);
}

#[test]
fn evaluation_is_reproducible_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let arch = NetworkArchitecture::new(4, vec![8], 2, Activation::Tanh).unwrap();
    let params = ParameterVector::init(arch, 9);
    let path = dir.path().join("p.bin");
    save_checkpoint(&path, &params, None).unwrap();
    let a = evaluate(&path, EnvId::CartPole, 1, 42).unwrap();
    let b = evaluate(&path, EnvId::CartPole, 1, 42).unwrap();
    assert_eq!(a, b);
    assert!(matches!(evaluate(&path, EnvId::Chain { length: 3 }, 1, 0), Err(Error::Config(_))));
    assert!(evaluate(&path, EnvId::CartPole, 0, 0).is_err());
}
