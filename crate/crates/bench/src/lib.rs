//! Seeded inputs shared by the benches.

use dppo_core::nn::{log_probs, Tensor};
use dppo_core::{Activation, NetworkArchitecture, ParameterVector, TrajectoryBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` surrogate values uniform in [-5, 5].
pub fn surrogates(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect()
}

/// Default-sized cartpole network with seeded initialization.
pub fn cartpole_params(seed: u64) -> ParameterVector {
    let arch = NetworkArchitecture::new(4, vec![64, 64], 2, Activation::Tanh).expect("valid architecture");
    ParameterVector::init(arch, seed)
}

/// An annotated single-actor batch of `n` random cartpole-shaped samples
/// whose old log-probabilities come from `params`.
pub fn synthetic_batch(params: &ParameterVector, n: usize, seed: u64) -> TrajectoryBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let observations = Tensor::new(n, 4, obs).expect("shape matches");
    let out = params.forward(&observations).expect("dimensions match");
    let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let old_log_probs = (0..n).map(|i| log_probs(out.logits.row(i))[actions[i]]).collect();
    TrajectoryBatch {
        actors: 1,
        horizon: n,
        observations,
        actions,
        rewards: (0..n).map(|_| 1.0).collect(),
        dones: (0..n).map(|_| rng.random_bool(0.02)).collect(),
        old_log_probs,
        old_values: out.values,
        bootstrap_values: vec![0.0],
        advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        value_targets: (0..n).map(|_| rng.random_range(0.0..50.0)).collect(),
    }
}
