//! Seeded oracle sweeps: the variance identities on random and MDP-grounded
//! distributions, `φ` against its quadratic definition, dropout fractions
//! and ordering, and loss gradients against finite differences.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dropout::{apply_ratio_dropout, partition, phi_values};
use crate::error::{Error, Result};
use crate::nn::{log_probs, Activation, NetworkArchitecture, ParameterVector, Tensor};
use crate::objective::{combined_loss_gradient, combined_loss_value, LossConfig, PolicyObjective};
use crate::rollout::TrajectoryBatch;
use crate::variance::{random_mdp_support_distribution, random_support_distribution, verify_identities};

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const PHI_TOLERANCE: f64 = 1e-9;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const GRADIENT_STEP: f64 = 1e-5;
/// Denominator floor for elementwise gradient comparison, so entries that
/// are zero up to rounding are judged on absolute error.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Outcome of a passing sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub name: &'static str,
    pub instances: usize,
    /// Largest error metric seen, comparable against `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
}

impl std::fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} instances, worst {:.3e} (tolerance {:.0e})",
            self.name, self.instances, self.worst, self.tolerance
        )
    }
}

fn instance_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.next_u64()
}

/// Random distributions with `1 ≤ n ≤ 64` support pairs.
pub fn variance_identity_sweep(instances: usize, seed: u64) -> Result<CheckSummary> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let s = instance_seed(seed, i);
        let n = 1 + (s % 64) as usize;
        let dist = random_support_distribution(n, s)?;
        let r = verify_identities(&dist, IDENTITY_TOLERANCE)
            .map_err(|e| Error::Verification(format!("instance {i} (seed {s}): {e}")))?;
        worst = worst.max(r.max_rel_error).max(r.slack_rel_error);
    }
    Ok(CheckSummary {
        name: "variance identities",
        instances,
        worst,
        tolerance: IDENTITY_TOLERANCE,
    })
}

/// Distributions built from random MDPs with exact visitation and
/// advantages under a random policy, and a perturbed new policy.
pub fn mdp_identity_sweep(instances: usize, seed: u64) -> Result<CheckSummary> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let s = instance_seed(seed ^ 0x6d64_7073, i);
        let dist = random_mdp_support_distribution(s)?;
        let r = verify_identities(&dist, IDENTITY_TOLERANCE)
            .map_err(|e| Error::Verification(format!("mdp instance {i} (seed {s}): {e}")))?;
        worst = worst.max(r.max_rel_error).max(r.slack_rel_error);
    }
    Ok(CheckSummary {
        name: "mdp-grounded variance identities",
        instances,
        worst,
        tolerance: IDENTITY_TOLERANCE,
    })
}

/// `Σ_{j≠i} O_i·O_j` by the double loop.
pub fn phi_brute_force(surrogates: &[f64]) -> Vec<f64> {
    (0..surrogates.len())
        .map(|i| {
            let mut acc = 0.0;
            for (j, o) in surrogates.iter().enumerate() {
                if j != i {
                    acc += surrogates[i] * o;
                }
            }
            acc
        })
        .collect()
}

/// Error of each `φ_i` relative to `|O_i|·Σ_{j≠i}|O_j|`, the magnitude of
/// the terms being summed, so cancellation inside the sum is not counted
/// against the fast form.
pub fn phi_relative_error(surrogates: &[f64]) -> f64 {
    let fast = phi_values(surrogates);
    let slow = phi_brute_force(surrogates);
    let abs_total: f64 = surrogates.iter().map(|o| o.abs()).sum();
    fast.iter()
        .zip(&slow)
        .zip(surrogates)
        .map(|((a, b), o)| {
            let scale = o.abs() * (abs_total - o.abs());
            if scale == 0.0 {
                (a - b).abs()
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// `φ` against the double loop for each size in `sizes`.
pub fn phi_oracle_sweep(sizes: &[usize], seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for &n in sizes {
        let o: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect();
        let err = phi_relative_error(&o);
        if err > PHI_TOLERANCE {
            return Err(Error::Verification(format!("phi mismatch at n={n}: relative error {err:e}")));
        }
        worst = worst.max(err);
    }
    Ok(CheckSummary {
        name: "phi oracle",
        instances: sizes.len(),
        worst,
        tolerance: PHI_TOLERANCE,
    })
}

/// Distinct values uniform in [-1, 1].
fn distinct_phi(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let phi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut sorted = phi.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[0] < w[1]) {
            return phi;
        }
    }
}

/// For each `r`, per-part dropped fraction within `[r − 1/m, r + 2/m]` for a
/// part of size `m`, and every kept `φ` above every dropped `φ` of its part.
/// `worst` is the largest excursion outside the band (0 when all pass).
pub fn dropout_fraction_sweep(ratios: &[f64], instances: usize, n: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..n).collect();
    for &r in ratios {
        for inst in 0..instances {
            let phi = distinct_phi(n, &mut rng);
            let report = apply_ratio_dropout(&indices, &phi, r)?;
            let mut kept = vec![false; n];
            for &i in &report.kept_indices {
                kept[i] = true;
            }
            let (plus, minus) = partition(&indices, &phi);
            for (label, part) in [("plus", &plus), ("minus", &minus)] {
                if part.is_empty() {
                    continue;
                }
                let m = part.len() as f64;
                let dropped = part.iter().filter(|&&i| !kept[i]).count() as f64;
                let frac = dropped / m;
                if frac < r - 1.0 / m || frac > r + 2.0 / m {
                    return Err(Error::Verification(format!(
                        "r={r} instance {inst} part {label}: dropped fraction {frac} outside [{}, {}]",
                        r - 1.0 / m,
                        r + 2.0 / m
                    )));
                }
                let min_kept = part.iter().filter(|&&i| kept[i]).map(|&i| phi[i]).fold(f64::INFINITY, f64::min);
                let max_dropped =
                    part.iter().filter(|&&i| !kept[i]).map(|&i| phi[i]).fold(f64::NEG_INFINITY, f64::max);
                if min_kept <= max_dropped {
                    return Err(Error::Verification(format!(
                        "r={r} instance {inst} part {label}: kept phi {min_kept} not above dropped phi {max_dropped}"
                    )));
                }
            }
        }
    }
    Ok(CheckSummary {
        name: "dropout fraction and order",
        instances: ratios.len() * instances,
        worst: 0.0,
        tolerance: 0.0,
    })
}

/// A random network and batch for gradient checking: input width up to 8,
/// one or two hidden layers up to 16 wide, up to 4 actions, up to 32
/// samples, with old log-probabilities offset so ratios spread around 1.
pub fn random_loss_instance(seed: u64) -> Result<(ParameterVector, TrajectoryBatch, LossConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(1..=8);
    let depth = rng.random_range(1..=2);
    let trunk: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=16)).collect();
    let actions = rng.random_range(2..=4);
    let activation = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    let arch = NetworkArchitecture::new(input, trunk, actions, activation)?;
    let values: Vec<f64> = (0..arch.parameter_count())
        .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let params = ParameterVector::from_values(arch, values)?;

    let n = rng.random_range(1..=32);
    let obs: Vec<f64> = (0..n * input).map(|_| rng.random_range(-2.0..2.0)).collect();
    let observations = Tensor::new(n, input, obs)?;
    let out = params.forward(&observations)?;
    let acts: Vec<usize> = (0..n).map(|_| rng.random_range(0..actions)).collect();
    let old_log_probs = (0..n)
        .map(|i| log_probs(out.logits.row(i))[acts[i]] + rng.random_range(-0.3..0.3))
        .collect();
    let batch = TrajectoryBatch {
        actors: 1,
        horizon: n,
        observations,
        actions: acts,
        rewards: vec![0.0; n],
        dones: vec![false; n],
        old_log_probs,
        old_values: out.values.clone(),
        bootstrap_values: vec![0.0],
        advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        value_targets: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
    };
    let objective = if rng.random_bool(0.75) {
        PolicyObjective::Clip {
            epsilon: rng.random_range(0.05..0.3),
        }
    } else {
        PolicyObjective::Penalty {
            beta: rng.random_range(0.0..3.0),
        }
    };
    let config = LossConfig {
        objective,
        c1: rng.random_range(0.0..2.0),
        c2: rng.random_range(0.0..0.1),
        normalize_advantages: n > 1 && rng.random_bool(0.5),
    };
    Ok((params, batch, config))
}

/// Largest elementwise `|g − ĝ| / max(|g|, |ĝ|, floor)` between the analytic
/// gradient and central differences of step `h`.
pub fn gradient_error(
    params: &ParameterVector,
    batch: &TrajectoryBatch,
    config: &LossConfig,
    h: f64,
) -> Result<f64> {
    let indices: Vec<usize> = (0..batch.len()).collect();
    let (_, analytic) = combined_loss_gradient(params, batch, &indices, config)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for j in 0..params.len() {
        let x = params.values()[j];
        probe.values_mut()[j] = x + h;
        let up = combined_loss_value(&probe, batch, &indices, config)?.total;
        probe.values_mut()[j] = x - h;
        let down = combined_loss_value(&probe, batch, &indices, config)?.total;
        probe.values_mut()[j] = x;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[j].abs().max(numeric.abs()).max(GRADIENT_FLOOR);
        worst = worst.max((analytic[j] - numeric).abs() / scale);
    }
    Ok(worst)
}

pub fn gradient_check_sweep(instances: usize, seed: u64) -> Result<CheckSummary> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let s = instance_seed(seed ^ 0x6772_6164, i);
        let (params, batch, config) = random_loss_instance(s)?;
        let err = gradient_error(&params, &batch, &config, GRADIENT_STEP)?;
        if err > GRADIENT_TOLERANCE {
            return Err(Error::Verification(format!(
                "gradient instance {i} (seed {s}, network {}, {} samples): relative error {err:e}",
                params.architecture(),
                batch.len()
            )));
        }
        worst = worst.max(err);
    }
    Ok(CheckSummary {
        name: "loss gradient",
        instances,
        worst,
        tolerance: GRADIENT_TOLERANCE,
    })
}

/// Every sweep at the given instance count; stops at the first violation.
pub fn run_all(instances: usize, seed: u64) -> Result<Vec<CheckSummary>> {
    Ok(vec![
        variance_identity_sweep(instances, seed)?,
        mdp_identity_sweep(instances.div_ceil(20).max(1), seed)?,
        phi_oracle_sweep(&[1, 2, 3, 64, 1024, 4096], seed)?,
        dropout_fraction_sweep(&[0.1, 0.2, 0.3, 0.4, 0.5], instances.div_ceil(5).max(1), 2048, seed)?,
        gradient_check_sweep(instances.div_ceil(10).max(1), seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_small() {
        assert_eq!(phi_brute_force(&[2.0]), vec![0.0]);
        assert_eq!(phi_brute_force(&[1.0, -1.0]), vec![-1.0, -1.0]);
        assert_eq!(phi_brute_force(&[1.0, 2.0, 3.0]), vec![5.0, 8.0, 9.0]);
    }

    #[test]
    fn sweeps_pass_small() {
        let all = run_all(20, 1).unwrap();
        assert_eq!(all.len(), 5);
    }

    #[test]
    fn gradient_error_detects_wrong_step() {
        // A huge step makes central differences inaccurate on a curved loss.
        let (params, batch, config) = random_loss_instance(2).unwrap();
        assert!(gradient_error(&params, &batch, &config, GRADIENT_STEP).unwrap() < GRADIENT_TOLERANCE);
        assert!(gradient_error(&params, &batch, &config, 1.0).unwrap() > GRADIENT_TOLERANCE);
    }
}
