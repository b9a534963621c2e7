//! Multi-actor trajectory collection and generalized advantage estimation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::nn::{action_distribution, log_probs, PolicySnapshot, Tensor};

/// `N·H` transitions stored actor-major: slot `k·H + t` is step `t` of actor `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub actors: usize,
    pub horizon: usize,
    pub observations: Tensor,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub old_log_probs: Vec<f64>,
    pub old_values: Vec<f64>,
    /// Snapshot value of each actor's observation after its last stored step.
    pub bootstrap_values: Vec<f64>,
    /// Filled by [`gae_annotate`].
    pub advantages: Vec<f64>,
    /// Filled by [`gae_annotate`].
    pub value_targets: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_annotated(&self) -> bool {
        self.advantages.len() == self.len() && self.value_targets.len() == self.len()
    }

    /// Observation rows for `indices`, in order.
    pub fn gather_observations(&self, indices: &[usize]) -> Tensor {
        let cols = self.observations.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(self.observations.row(i));
        }
        Tensor::new(indices.len(), cols, data).expect("row gather keeps shape")
    }
}

/// Returns of completed episodes and a trailing-window mean over them.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    returns: Vec<f64>,
    window: usize,
    best_rolling: Option<f64>,
}

impl EpisodeStats {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "rolling window must be positive");
        Self {
            returns: Vec::new(),
            window,
            best_rolling: None,
        }
    }

    pub fn push(&mut self, episode_return: f64) {
        self.returns.push(episode_return);
        if let Some(m) = self.rolling_mean() {
            if self.best_rolling.is_none_or(|b| m > b) {
                self.best_rolling = Some(m);
            }
        }
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Mean of the last `window` returns, once at least `window` episodes finished.
    pub fn rolling_mean(&self) -> Option<f64> {
        let n = self.returns.len();
        if n < self.window {
            return None;
        }
        let tail = &self.returns[n - self.window..];
        Some(tail.iter().sum::<f64>() / self.window as f64)
    }

    /// Largest rolling mean observed after any episode completion.
    pub fn best_rolling_mean(&self) -> Option<f64> {
        self.best_rolling
    }
}

/// `N` environments, each with its own RNG stream, carrying episodes across
/// successive collections.
pub struct ActorSet {
    envs: Vec<Box<dyn Environment>>,
    rngs: Vec<ChaCha8Rng>,
    observations: Vec<Vec<f64>>,
    running_returns: Vec<f64>,
    spec: EnvSpec,
}

impl ActorSet {
    pub fn new(mut envs: Vec<Box<dyn Environment>>, seed: u64) -> Result<Self> {
        let spec = envs
            .first()
            .ok_or_else(|| Error::Input("at least one actor required".into()))?
            .spec();
        if envs.iter().any(|e| e.spec() != spec) {
            return Err(Error::Input("all actors must share one environment spec".into()));
        }
        let mut rngs = Vec::with_capacity(envs.len());
        let mut observations = Vec::with_capacity(envs.len());
        for (k, env) in envs.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            observations.push(env.reset(rng.next_u64()));
            rngs.push(rng);
        }
        Ok(Self {
            running_returns: vec![0.0; envs.len()],
            envs,
            rngs,
            observations,
            spec,
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    /// Rolls every actor forward `horizon` steps under `snapshot`, resetting
    /// finished episodes in place. Completed returns are appended to `stats`.
    pub fn collect(
        &mut self,
        snapshot: &PolicySnapshot,
        horizon: usize,
        stats: &mut EpisodeStats,
    ) -> Result<TrajectoryBatch> {
        if horizon == 0 {
            return Err(Error::Input("horizon must be >= 1".into()));
        }
        let n = self.envs.len();
        let total = n * horizon;
        let dim = self.spec.observation_dim;
        let mut obs = vec![0.0; total * dim];
        let mut actions = vec![0; total];
        let mut rewards = vec![0.0; total];
        let mut dones = vec![false; total];
        let mut old_log_probs = vec![0.0; total];
        let mut old_values = vec![0.0; total];

        for t in 0..horizon {
            let current = Tensor::from_rows(&self.observations)?;
            let out = snapshot.params().forward(&current)?;
            for k in 0..n {
                let slot = k * horizon + t;
                let logits = out.logits.row(k);
                let action = sample_action(&action_distribution(logits), &mut self.rngs[k]);
                obs[slot * dim..(slot + 1) * dim].copy_from_slice(&self.observations[k]);
                actions[slot] = action;
                old_log_probs[slot] = log_probs(logits)[action];
                old_values[slot] = out.values[k];

                let step = self.envs[k].step(action).map_err(|e| Error::Env {
                    actor: k,
                    source: Box::new(e),
                })?;
                rewards[slot] = step.reward;
                dones[slot] = step.done;
                self.running_returns[k] += step.reward;
                if step.done {
                    stats.push(self.running_returns[k]);
                    self.running_returns[k] = 0.0;
                    let seed = self.rngs[k].next_u64();
                    self.observations[k] = self.envs[k].reset(seed);
                } else {
                    self.observations[k] = step.observation;
                }
            }
        }
        let last = Tensor::from_rows(&self.observations)?;
        let bootstrap_values = snapshot.params().forward(&last)?.values;

        Ok(TrajectoryBatch {
            actors: n,
            horizon,
            observations: Tensor::new(total, dim, obs)?,
            actions,
            rewards,
            dones,
            old_log_probs,
            old_values,
            bootstrap_values,
            advantages: Vec::new(),
            value_targets: Vec::new(),
        })
    }
}

fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Fills `advantages` and `value_targets` by the GAE backward recursion,
/// per actor, using the stored snapshot values.
pub fn gae_annotate(batch: &mut TrajectoryBatch, lambda: f64, gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Input(format!(
            "gae parameters must lie in [0,1]: lambda {lambda}, gamma {gamma}"
        )));
    }
    let (n, h) = (batch.actors, batch.horizon);
    let mut adv = vec![0.0; n * h];
    for k in 0..n {
        let mut next_adv = 0.0;
        let mut next_value = batch.bootstrap_values[k];
        for t in (0..h).rev() {
            let i = k * h + t;
            let live = if batch.dones[i] { 0.0 } else { 1.0 };
            let delta = batch.rewards[i] + gamma * next_value * live - batch.old_values[i];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[i] = next_adv;
            next_value = batch.old_values[i];
        }
    }
    if let Some(i) = adv.iter().position(|a| !a.is_finite()) {
        return Err(Error::numeric("advantage", format!("slot {i} is {}", adv[i])));
    }
    batch.value_targets = adv.iter().zip(&batch.old_values).map(|(a, v)| a + v).collect();
    batch.advantages = adv;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CartPole, ChainMdp};
    use crate::nn::{log_prob, Activation, NetworkArchitecture, ParameterVector};

    fn manual_batch(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, bootstrap: f64) -> TrajectoryBatch {
        let h = rewards.len();
        TrajectoryBatch {
            actors: 1,
            horizon: h,
            observations: Tensor::zeros(h, 1),
            actions: vec![0; h],
            rewards,
            dones,
            old_log_probs: vec![0.0; h],
            old_values: values,
            bootstrap_values: vec![bootstrap],
            advantages: Vec::new(),
            value_targets: Vec::new(),
        }
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let mut b = manual_batch(vec![1.0], vec![1.0], vec![false], 0.5);
        gae_annotate(&mut b, 0.0, 0.99).unwrap();
        assert!((b.advantages[0] - 0.495).abs() < 1e-15);
        assert!((b.value_targets[0] - 1.495).abs() < 1e-15);
    }

    #[test]
    fn lambda_one_gamma_one_is_return() {
        let mut b = manual_batch(vec![1.0; 3], vec![0.0; 3], vec![false, false, true], 123.0);
        gae_annotate(&mut b, 1.0, 1.0).unwrap();
        assert_eq!(b.advantages, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn terminal_blocks_future_rewards() {
        let mut b = manual_batch(
            vec![1.0, 1.0, 50.0, 50.0],
            vec![0.3, 0.2, 0.9, 0.1],
            vec![false, true, false, false],
            7.0,
        );
        gae_annotate(&mut b, 0.95, 0.99).unwrap();
        let mut c = b.clone();
        c.rewards[2] = -1000.0;
        c.rewards[3] = 12.0;
        c.bootstrap_values[0] = -3.0;
        gae_annotate(&mut c, 0.95, 0.99).unwrap();
        assert_eq!(b.advantages[..2], c.advantages[..2]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut b = manual_batch(vec![1.0], vec![1.0], vec![false], 0.5);
        assert!(gae_annotate(&mut b, 1.5, 0.9).is_err());
    }

    fn cartpole_actors(n: usize, seed: u64) -> ActorSet {
        let envs: Vec<Box<dyn Environment>> = (0..n).map(|_| Box::new(CartPole::new()) as _).collect();
        ActorSet::new(envs, seed).unwrap()
    }

    fn cartpole_snapshot() -> PolicySnapshot {
        let arch = NetworkArchitecture::new(4, vec![16], 2, Activation::Tanh).unwrap();
        PolicySnapshot::new(&ParameterVector::init(arch, 2))
    }

    #[test]
    fn batch_size_is_actors_times_horizon() {
        let mut actors = cartpole_actors(8, 1);
        let mut stats = EpisodeStats::new(10);
        let b = actors.collect(&cartpole_snapshot(), 256, &mut stats).unwrap();
        assert_eq!(b.len(), 2048);
        assert_eq!(b.observations.rows(), 2048);
        assert_eq!(b.bootstrap_values.len(), 8);
        assert!(b.old_log_probs.iter().all(|&l| l.is_finite() && l <= 0.0));
        assert!(!stats.returns().is_empty());
    }

    #[test]
    fn stored_log_prob_matches_recomputation() {
        let snap = cartpole_snapshot();
        let mut actors = cartpole_actors(1, 4);
        let mut stats = EpisodeStats::new(1);
        let b = actors.collect(&snap, 1, &mut stats).unwrap();
        let out = snap.params().forward(&b.gather_observations(&[0])).unwrap();
        assert_eq!(b.old_log_probs[0], log_prob(out.logits.row(0), b.actions[0]).unwrap());
        assert_eq!(b.old_values[0], out.values[0]);
    }

    #[test]
    fn collection_is_deterministic() {
        let snap = cartpole_snapshot();
        let run = || {
            let mut actors = cartpole_actors(3, 99);
            let mut stats = EpisodeStats::new(2);
            let a = actors.collect(&snap, 64, &mut stats).unwrap();
            let b = actors.collect(&snap, 64, &mut stats).unwrap();
            (a, b, stats)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn actors_use_distinct_streams() {
        let snap = cartpole_snapshot();
        let mut actors = cartpole_actors(2, 5);
        let mut stats = EpisodeStats::new(1);
        let b = actors.collect(&snap, 32, &mut stats).unwrap();
        assert_ne!(b.actions[..32], b.actions[32..]);
    }

    #[test]
    fn environment_faults_name_the_actor() {
        struct Broken;
        impl Environment for Broken {
            fn spec(&self) -> EnvSpec {
                EnvSpec { observation_dim: 2, action_count: 2, horizon_cap: 8 }
            }
            fn reset(&mut self, _: u64) -> Vec<f64> {
                vec![0.0, 1.0]
            }
            fn step(&mut self, _: usize) -> Result<crate::env::Step> {
                Err(Error::Usage("boom".into()))
            }
        }
        let envs: Vec<Box<dyn Environment>> = vec![Box::new(ChainMdp::new(2).unwrap()), Box::new(Broken)];
        let mut actors = ActorSet::new(envs, 0).unwrap();
        let arch = NetworkArchitecture::new(2, vec![], 2, Activation::Tanh).unwrap();
        let snap = PolicySnapshot::new(&ParameterVector::zeros(arch));
        let err = actors.collect(&snap, 1, &mut EpisodeStats::new(1)).unwrap_err();
        assert!(matches!(err, Error::Env { actor: 1, .. }), "{err}");
    }

    #[test]
    fn rolling_mean_tracks_window() {
        let mut s = EpisodeStats::new(2);
        s.push(10.0);
        assert_eq!(s.rolling_mean(), None);
        s.push(20.0);
        assert_eq!(s.rolling_mean(), Some(15.0));
        s.push(0.0);
        assert_eq!(s.rolling_mean(), Some(10.0));
        assert_eq!(s.best_rolling_mean(), Some(15.0));
    }
}
