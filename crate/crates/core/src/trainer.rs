//! Collect, annotate, optimize for several epochs while shrinking the live
//! set by sample dropout, and repeat; plus greedy evaluation.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{LrDecay, TrainConfig};
use crate::dropout::{apply_dropout, phi_values, DropoutMode};
use crate::env::{EnvId, Environment};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, load_checkpoint, save_checkpoint, AdamState, NetworkArchitecture, ParameterVector,
    PolicySnapshot, Tensor,
};
use crate::objective::{combined_loss_gradient, surrogate_sample_set};
use crate::rollout::{gae_annotate, ActorSet, EpisodeStats, TrajectoryBatch};
use crate::variance::empirical_variance;

/// `lr0·(1 − step/total)`, floored at 0.
pub fn lr_schedule(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    (lr0 * (1.0 - step as f64 / total_steps as f64)).max(0.0)
}

/// One metrics row: the state of one epoch of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub global_step: u64,
    pub update_index: usize,
    pub epoch_index: usize,
    pub mean_return: Option<f64>,
    /// Population variance of the surrogate values over the live set,
    /// measured before the epoch's first minibatch.
    pub surrogate_variance: f64,
    /// Means over the epoch's minibatches.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Live samples left after the epoch's dropout pass.
    pub kept_count: usize,
    pub dropped_phi_pos_mean: Option<f64>,
    pub dropped_phi_neg_mean: Option<f64>,
    pub lr: f64,
}

pub const CSV_HEADER: &str = "global_step,update,epoch,mean_return,surrogate_variance,policy_loss,value_loss,entropy,kept_count,dropped_phi_pos_mean,dropped_phi_neg_mean,lr";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl UpdateRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.global_step,
            self.update_index,
            self.epoch_index,
            opt(self.mean_return),
            self.surrogate_variance,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.kept_count,
            opt(self.dropped_phi_pos_mean),
            opt(self.dropped_phi_neg_mean),
            self.lr
        )
    }
}

/// Fixed per-update quantities stamped onto every record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateContext {
    pub global_step: u64,
    pub update_index: usize,
    pub mean_return: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub records: Vec<UpdateRecord>,
    pub adam_steps: usize,
    /// Live-set size at the start of each epoch that ran.
    pub live_counts: Vec<usize>,
}

/// Runs `config.epochs` epochs of minibatch Adam steps over `batch`,
/// applying the configured dropout to the live set after each epoch.
/// An epoch that starts with an empty live set ends the update early.
pub fn run_update(
    params: &mut ParameterVector,
    adam: &mut AdamState,
    batch: &TrajectoryBatch,
    config: &TrainConfig,
    ctx: &UpdateContext,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateOutcome> {
    if !batch.is_annotated() {
        return Err(Error::Usage("batch has no advantages; run gae_annotate first".into()));
    }
    let loss_config = config.loss_config();
    let mut live: Vec<usize> = (0..batch.len()).collect();
    let mut outcome = UpdateOutcome {
        records: Vec::with_capacity(config.epochs),
        adam_steps: 0,
        live_counts: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        if live.is_empty() {
            log::warn!(
                "update {}: live set empty before epoch {epoch}; skipping remaining epochs",
                ctx.update_index
            );
            break;
        }
        outcome.live_counts.push(live.len());
        let before = surrogate_sample_set(params, batch, &live)?;
        let surrogate_variance = empirical_variance(&before.surrogates);

        let mut order = live.clone();
        order.shuffle(rng);
        let (mut policy_loss, mut value_loss, mut entropy) = (0.0, 0.0, 0.0);
        let mut minibatches = 0usize;
        for (mb, chunk) in order.chunks(config.minibatch_size).enumerate() {
            let (parts, grad) =
                combined_loss_gradient(params, batch, chunk, &loss_config).map_err(|e| e.in_minibatch(mb))?;
            adam_step(params.values_mut(), &grad, adam, ctx.lr).map_err(|e| e.in_minibatch(mb))?;
            policy_loss += parts.policy_loss;
            value_loss += parts.value_loss;
            entropy += parts.entropy;
            minibatches += 1;
        }
        outcome.adam_steps += minibatches;
        let m = minibatches as f64;

        let report = if config.dropout.mode == DropoutMode::Off {
            apply_dropout(&config.dropout, &live, &vec![0.0; live.len()])?
        } else {
            let after = surrogate_sample_set(params, batch, &live)?;
            apply_dropout(&config.dropout, &live, &phi_values(&after.surrogates))?
        };
        if report.degenerate_partitions > 0 {
            log::warn!(
                "update {} epoch {epoch}: {} partition(s) had constant phi and were kept intact",
                ctx.update_index,
                report.degenerate_partitions
            );
        }
        live = report.kept_indices;
        outcome.records.push(UpdateRecord {
            global_step: ctx.global_step,
            update_index: ctx.update_index,
            epoch_index: epoch,
            mean_return: ctx.mean_return,
            surrogate_variance,
            policy_loss: policy_loss / m,
            value_loss: value_loss / m,
            entropy: entropy / m,
            kept_count: report.kept_count,
            dropped_phi_pos_mean: report.dropped_phi_pos_mean,
            dropped_phi_neg_mean: report.dropped_phi_neg_mean,
            lr: ctx.lr,
        });
    }
    Ok(outcome)
}

/// What a finished run reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub updates: usize,
    pub global_steps: u64,
    pub episodes: usize,
    pub best_rolling_mean: Option<f64>,
    pub final_rolling_mean: Option<f64>,
    pub adam_steps: Vec<usize>,
    pub final_checkpoint: PathBuf,
}

fn architecture_for(config: &TrainConfig, env: &dyn Environment) -> Result<NetworkArchitecture> {
    let spec = env.spec();
    NetworkArchitecture::new(spec.observation_dim, config.trunk.clone(), spec.action_count, config.activation)
}

/// Rolling mean once the window is full, otherwise the mean of whatever
/// episodes have finished.
fn current_mean_return(stats: &EpisodeStats) -> Option<f64> {
    stats.rolling_mean().or_else(|| {
        let r = stats.returns();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    })
}

fn checkpoint_path(out_dir: &Path, update: usize) -> PathBuf {
    out_dir.join("checkpoints").join(format!("ckpt_{update}.bin"))
}

/// Trains until `total_steps` are consumed, writing `config.resolved`,
/// `metrics.csv`, periodic checkpoints and `final_report.txt` under
/// `out_dir`. Checkpoints are written atomically, so on error the last one
/// on disk is consistent.
pub fn train(config: &TrainConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let env_id = config
        .env_id
        .ok_or_else(|| Error::Usage("env_id is required for training".into()))?;
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    fs::write(out_dir.join("config.resolved"), config.resolved())?;

    let envs: Vec<Box<dyn Environment>> = (0..config.actors).map(|_| env_id.build()).collect::<Result<_>>()?;
    let arch = architecture_for(config, envs[0].as_ref())?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParameterVector::init(arch.clone(), master.next_u64());
    let mut adam = AdamState::new(params.len());
    let mut actors = ActorSet::new(envs, config.seed)?;
    let mut stats = EpisodeStats::new(config.return_window);

    let batch_size = config.batch_size() as u64;
    let updates = (config.total_steps / batch_size) as usize;
    log::info!(
        "training {env_id}: {updates} updates of {batch_size} steps, network {arch}, dropout {}",
        config.dropout.mode
    );
    let mut metrics = BufWriter::new(File::create(out_dir.join("metrics.csv"))?);
    writeln!(metrics, "{CSV_HEADER}")?;

    let mut adam_steps = Vec::with_capacity(updates);
    let mut last_checkpoint = None;
    for update in 0..updates {
        let step_before = update as u64 * batch_size;
        let lr = match config.lr_decay {
            LrDecay::Linear => lr_schedule(step_before, config.total_steps, config.lr0),
            LrDecay::Constant => config.lr0,
        };
        let snapshot = PolicySnapshot::new(&params);
        let mut batch = actors.collect(&snapshot, config.horizon, &mut stats)?;
        gae_annotate(&mut batch, config.gae_lambda, config.gamma)?;
        let ctx = UpdateContext {
            global_step: step_before + batch_size,
            update_index: update,
            mean_return: current_mean_return(&stats),
            lr,
        };
        let outcome = run_update(&mut params, &mut adam, &batch, config, &ctx, &mut master)?;
        for record in &outcome.records {
            writeln!(metrics, "{}", record.csv_row())?;
        }
        metrics.flush()?;
        adam_steps.push(outcome.adam_steps);
        if let Some(last) = outcome.records.last() {
            log::info!(
                "update {}/{updates} step {} return {} variance {:.4e} kept {}",
                update + 1,
                ctx.global_step,
                opt(ctx.mean_return),
                last.surrogate_variance,
                last.kept_count
            );
        }
        let done = update + 1;
        if done % config.checkpoint_every == 0 || done == updates {
            let path = checkpoint_path(out_dir, done);
            save_checkpoint(&path, &params, Some(&adam))?;
            last_checkpoint = Some(path);
        }
    }
    let final_checkpoint = match last_checkpoint {
        Some(p) => p,
        None => {
            let p = checkpoint_path(out_dir, 0);
            save_checkpoint(&p, &params, Some(&adam))?;
            p
        }
    };
    let summary = RunSummary {
        updates,
        global_steps: updates as u64 * batch_size,
        episodes: stats.returns().len(),
        best_rolling_mean: stats.best_rolling_mean(),
        final_rolling_mean: stats.rolling_mean(),
        adam_steps,
        final_checkpoint,
    };
    fs::write(out_dir.join("final_report.txt"), final_report(config, &summary))?;
    Ok(summary)
}

fn final_report(config: &TrainConfig, s: &RunSummary) -> String {
    let mut out = String::new();
    let env = config.env_id.map(|e| e.to_string()).unwrap_or_default();
    let _ = writeln!(out, "env_id = {env}");
    let _ = writeln!(out, "seed = {}", config.seed);
    let _ = writeln!(out, "dropout.mode = {}", config.dropout.mode);
    let _ = writeln!(out, "updates = {}", s.updates);
    let _ = writeln!(out, "global_steps = {}", s.global_steps);
    let _ = writeln!(out, "episodes = {}", s.episodes);
    let _ = writeln!(out, "return_window = {}", config.return_window);
    let _ = writeln!(out, "best_rolling_mean = {}", opt(s.best_rolling_mean));
    let _ = writeln!(out, "final_rolling_mean = {}", opt(s.final_rolling_mean));
    let _ = writeln!(out, "adam_steps_total = {}", s.adam_steps.iter().sum::<usize>());
    let _ = writeln!(out, "final_checkpoint = {}", s.final_checkpoint.display());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub returns: Vec<f64>,
    pub mean: f64,
}

/// Highest-logit action; exact ties are broken uniformly at random so that
/// a policy with flat logits behaves like the uniform policy.
fn greedy_action(logits: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let best = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..logits.len()).filter(|&i| logits[i] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Greedy rollouts of `params` on `env_id`.
pub fn evaluate_params(params: &ParameterVector, env_id: EnvId, episodes: usize, seed: u64) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Input("episodes must be >= 1".into()));
    }
    let mut env = env_id.build()?;
    let spec = env.spec();
    let arch = params.architecture();
    if arch.input_dim() != spec.observation_dim || arch.action_count() != spec.action_count {
        return Err(Error::Config(format!(
            "checkpoint network {arch} does not fit {env_id} ({} observations, {} actions)",
            spec.observation_dim, spec.action_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng.next_u64());
        let mut total = 0.0;
        loop {
            let out = params.forward(&Tensor::from_rows(&[&obs])?)?;
            let step = env.step(greedy_action(out.logits.row(0), &mut rng))?;
            total += step.reward;
            if step.done {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    Ok(EvalResult { returns, mean })
}

/// Greedy rollouts of a saved checkpoint.
pub fn evaluate(checkpoint: &Path, env_id: EnvId, episodes: usize, seed: u64) -> Result<EvalResult> {
    let ckpt = load_checkpoint(checkpoint)?;
    evaluate_params(&ckpt.params, env_id, episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::DropoutConfig;
    use crate::nn::Activation;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0, 1000, 2.5e-4), 2.5e-4);
        assert_eq!(lr_schedule(1000, 1000, 2.5e-4), 0.0);
        assert_eq!(lr_schedule(500, 1000, 2.5e-4), 1.25e-4);
        assert_eq!(lr_schedule(2000, 1000, 2.5e-4), 0.0);
    }

    #[test]
    fn csv_row_leaves_absent_fields_empty() {
        let r = UpdateRecord {
            global_step: 64,
            update_index: 0,
            epoch_index: 1,
            mean_return: None,
            surrogate_variance: 0.5,
            policy_loss: -0.25,
            value_loss: 2.0,
            entropy: 0.693,
            kept_count: 40,
            dropped_phi_pos_mean: Some(1.5),
            dropped_phi_neg_mean: None,
            lr: 0.001,
        };
        assert_eq!(r.csv_row(), "64,0,1,,0.5,-0.25,2,0.693,40,1.5,,0.001");
        assert_eq!(CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }

    fn small_config(dropout: DropoutConfig) -> TrainConfig {
        TrainConfig {
            env_id: Some(EnvId::Chain { length: 4 }),
            actors: 4,
            horizon: 32,
            total_steps: 128 * 3,
            minibatch_size: 32,
            trunk: vec![8],
            activation: Activation::Tanh,
            lr0: 1e-3,
            dropout,
            ..TrainConfig::default()
        }
    }

    fn annotated_batch(config: &TrainConfig, seed: u64) -> (ParameterVector, TrajectoryBatch) {
        let env_id = config.env_id.unwrap();
        let envs = (0..config.actors).map(|_| env_id.build().unwrap()).collect::<Vec<_>>();
        let arch = architecture_for(config, envs[0].as_ref()).unwrap();
        let params = ParameterVector::init(arch, seed);
        let mut actors = ActorSet::new(envs, seed).unwrap();
        let mut stats = EpisodeStats::new(5);
        let mut batch = actors
            .collect(&PolicySnapshot::new(&params), config.horizon, &mut stats)
            .unwrap();
        gae_annotate(&mut batch, config.gae_lambda, config.gamma).unwrap();
        (params, batch)
    }

    fn ctx() -> UpdateContext {
        UpdateContext {
            global_step: 128,
            update_index: 0,
            mean_return: None,
            lr: 1e-3,
        }
    }

    #[test]
    fn plain_mode_keeps_everything() {
        let config = small_config(DropoutConfig::off());
        let (mut params, batch) = annotated_batch(&config, 3);
        let mut adam = AdamState::new(params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_update(&mut params, &mut adam, &batch, &config, &ctx(), &mut rng).unwrap();
        assert_eq!(out.adam_steps, 4 * 4);
        assert_eq!(adam.step_count, 16);
        assert_eq!(out.live_counts, vec![128; 4]);
        assert!(out.records.iter().all(|r| r.kept_count == 128 && r.dropped_phi_pos_mean.is_none()));
    }

    #[test]
    fn ratio_mode_shrinks_monotonically() {
        let config = small_config(DropoutConfig::ratio(0.2));
        let (mut params, batch) = annotated_batch(&config, 5);
        let mut adam = AdamState::new(params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_update(&mut params, &mut adam, &batch, &config, &ctx(), &mut rng).unwrap();
        let kept: Vec<usize> = out.records.iter().map(|r| r.kept_count).collect();
        assert!(kept.windows(2).all(|w| w[1] <= w[0]), "{kept:?}");
        assert!(kept[0] < 128, "{kept:?}");
        let expected_steps: usize = out.live_counts.iter().map(|n| n.div_ceil(32)).sum();
        assert_eq!(out.adam_steps, expected_steps);
    }

    #[test]
    fn full_dropout_ends_update_early() {
        let mut d = DropoutConfig::ratio(0.0);
        d.mode = DropoutMode::Threshold;
        d.delta_plus = f64::INFINITY;
        d.delta_minus = f64::INFINITY;
        let config = small_config(d);
        let (mut params, batch) = annotated_batch(&config, 7);
        let mut adam = AdamState::new(params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_update(&mut params, &mut adam, &batch, &config, &ctx(), &mut rng).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].kept_count, 0);
        assert_eq!(out.adam_steps, 4);
    }

    #[test]
    fn unannotated_batch_rejected() {
        let config = small_config(DropoutConfig::off());
        let (mut params, mut batch) = annotated_batch(&config, 1);
        batch.advantages.clear();
        let mut adam = AdamState::new(params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            run_update(&mut params, &mut adam, &batch, &config, &ctx(), &mut rng),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn greedy_ties_are_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(greedy_action(&[0.1, 0.7, 0.2], &mut rng), 1);
        let mut counts = [0usize; 2];
        for _ in 0..1000 {
            counts[greedy_action(&[0.0, 0.0], &mut rng)] += 1;
        }
        assert!(counts[0] > 400 && counts[1] > 400, "{counts:?}");
    }
}
