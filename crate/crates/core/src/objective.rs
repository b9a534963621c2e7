//! Importance ratios, surrogate values, the clipped and KL-penalised
//! policy objectives, and the combined actor-critic loss.

use crate::error::{Error, Result};
use crate::nn::{gradient, log_probs, NetworkVars, ParameterVector, Tape, Tensor, Var};
use crate::rollout::TrajectoryBatch;

/// Per-sample ratio, advantage and surrogate value for a subset of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSampleSet {
    pub ratios: Vec<f64>,
    pub advantages: Vec<f64>,
    pub surrogates: Vec<f64>,
    /// Batch slot of each sample.
    pub live_index: Vec<usize>,
}

impl SurrogateSampleSet {
    pub fn len(&self) -> usize {
        self.live_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live_index.is_empty()
    }
}

/// `π_θ(a|s) / π_old(a|s)` for the given batch slots, via `exp(new − old)` in log space.
pub fn ratios(params: &ParameterVector, batch: &TrajectoryBatch, indices: &[usize]) -> Result<Vec<f64>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= batch.len()) {
        return Err(Error::Input(format!("index {bad} outside batch of {}", batch.len())));
    }
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let out = params.forward(&batch.gather_observations(indices))?;
    indices
        .iter()
        .enumerate()
        .map(|(row, &i)| {
            let new = log_probs(out.logits.row(row))[batch.actions[i]];
            let r = (new - batch.old_log_probs[i]).exp();
            if r.is_finite() && r > 0.0 {
                Ok(r)
            } else {
                Err(Error::numeric("ratio", format!("sample {i} has ratio {r}")))
            }
        })
        .collect()
}

pub fn surrogate_values(ratios: &[f64], advantages: &[f64]) -> Vec<f64> {
    debug_assert_eq!(ratios.len(), advantages.len());
    ratios.iter().zip(advantages).map(|(r, a)| r * a).collect()
}

/// Ratios and surrogates of `indices` under `params`, with the batch's raw advantages.
pub fn surrogate_sample_set(
    params: &ParameterVector,
    batch: &TrajectoryBatch,
    indices: &[usize],
) -> Result<SurrogateSampleSet> {
    if !batch.is_annotated() {
        return Err(Error::Usage("batch has no advantages; run gae_annotate first".into()));
    }
    let ratios = ratios(params, batch, indices)?;
    let advantages: Vec<f64> = indices.iter().map(|&i| batch.advantages[i]).collect();
    let surrogates = surrogate_values(&ratios, &advantages);
    Ok(SurrogateSampleSet {
        ratios,
        advantages,
        surrogates,
        live_index: indices.to_vec(),
    })
}

/// Per-sample `min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â)`.
pub fn clip_objective(ratios: &[f64], advantages: &[f64], epsilon: f64) -> Vec<f64> {
    ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| {
            let unclipped = r * a;
            let clipped = r.clamp(1.0 - epsilon, 1.0 + epsilon) * a;
            if unclipped <= clipped {
                unclipped
            } else {
                clipped
            }
        })
        .collect()
}

/// Non-negative KL estimate `mean((ρ − 1) − ln ρ)`.
pub fn kl_estimate(ratios: &[f64]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.iter().map(|&r| (r - 1.0) - r.ln()).sum::<f64>() / ratios.len() as f64
}

/// `mean(ρ·Â) − β·kl` with a fixed coefficient.
pub fn penalty_objective(ratios: &[f64], advantages: &[f64], kl: f64, beta: f64) -> f64 {
    let n = ratios.len().max(1) as f64;
    let surrogate: f64 = surrogate_values(ratios, advantages).iter().sum::<f64>() / n;
    surrogate - beta * kl
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyObjective {
    Clip { epsilon: f64 },
    Penalty { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub objective: PolicyObjective,
    pub c1: f64,
    pub c2: f64,
    /// Standardise advantages within the minibatch for the policy term.
    pub normalize_advantages: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LossBreakdown {
    pub fn compose(policy_loss: f64, value_loss: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
        policy_loss + c1 * value_loss - c2 * entropy
    }
}

/// Loss components placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
}

fn standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    xs.iter().map(|x| (x - mean) / std).collect()
}

/// Builds `l = l_p + c1·l_v − c2·l_e` for the batch slots `indices`, where
/// `l_p` is the negated mean policy objective, `l_v` the mean squared error
/// against value targets and `l_e` the mean policy entropy.
pub fn combined_loss(
    tape: &mut Tape,
    vars: &NetworkVars,
    batch: &TrajectoryBatch,
    indices: &[usize],
    config: &LossConfig,
) -> Result<LossVars> {
    if indices.is_empty() {
        return Err(Error::Input("combined loss needs a non-empty minibatch".into()));
    }
    if !batch.is_annotated() {
        return Err(Error::Usage("batch has no advantages; run gae_annotate first".into()));
    }
    let n = indices.len();
    let obs = tape.leaf(batch.gather_observations(indices));
    let (logits, values) = vars.forward(tape, obs);

    let mut adv: Vec<f64> = indices.iter().map(|&i| batch.advantages[i]).collect();
    if config.normalize_advantages && n > 1 {
        adv = standardize(&adv);
    }
    let adv = tape.leaf(Tensor::column(adv));
    let old_lp = tape.leaf(Tensor::column(indices.iter().map(|&i| batch.old_log_probs[i]).collect()));
    let targets = tape.leaf(Tensor::column(indices.iter().map(|&i| batch.value_targets[i]).collect()));

    let log_p = tape.log_softmax(logits);
    let new_lp = tape.gather(log_p, indices.iter().map(|&i| batch.actions[i]).collect());
    let log_ratio = tape.sub(new_lp, old_lp);
    let ratio = tape.exp(log_ratio);
    let surrogate = tape.mul(ratio, adv);

    let policy = match config.objective {
        PolicyObjective::Clip { epsilon } => {
            let clipped_ratio = tape.clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
            let clipped = tape.mul(clipped_ratio, adv);
            let objective = tape.min(surrogate, clipped);
            let mean = tape.mean(objective);
            tape.neg(mean)
        }
        PolicyObjective::Penalty { beta } => {
            // kl = mean(ρ − 1 − ln ρ)
            let kl_terms = tape.sub(ratio, log_ratio);
            let kl_shifted = tape.mean(kl_terms);
            let one = tape.leaf(Tensor::scalar(1.0));
            let kl = tape.sub(kl_shifted, one);
            let mean_surrogate = tape.mean(surrogate);
            let penalty = tape.scale(kl, beta);
            let objective = tape.sub(mean_surrogate, penalty);
            tape.neg(objective)
        }
    };

    let err = tape.sub(values, targets);
    let sq = tape.square(err);
    let value = tape.mean(sq);

    let p = tape.exp(log_p);
    let plogp = tape.mul(p, log_p);
    let neg_entropy_rows = tape.row_sum(plogp);
    let neg_entropy = tape.mean(neg_entropy_rows);
    let entropy = tape.neg(neg_entropy);

    let weighted_value = tape.scale(value, config.c1);
    let weighted_entropy = tape.scale(entropy, config.c2);
    let partial = tape.add(policy, weighted_value);
    let total = tape.sub(partial, weighted_entropy);

    for (name, v) in [
        ("policy_loss", policy),
        ("value_loss", value),
        ("entropy", entropy),
        ("total_loss", total),
    ] {
        let x = tape.value(v).item();
        if !x.is_finite() {
            return Err(Error::numeric(name, format!("evaluated to {x}")));
        }
    }
    Ok(LossVars {
        total,
        policy,
        value,
        entropy,
    })
}

/// Combined loss and its exact gradient with respect to all parameters.
pub fn combined_loss_gradient(
    params: &ParameterVector,
    batch: &TrajectoryBatch,
    indices: &[usize],
    config: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut parts = None;
    let (_, grad) = gradient(params, |tape, vars| {
        let l = combined_loss(tape, vars, batch, indices, config)?;
        parts = Some((
            tape.value(l.policy).item(),
            tape.value(l.value).item(),
            tape.value(l.entropy).item(),
            tape.value(l.total).item(),
        ));
        Ok(l.total)
    })?;
    let (policy_loss, value_loss, entropy, total) = parts.expect("loss was built");
    Ok((
        LossBreakdown {
            policy_loss,
            value_loss,
            entropy,
            total,
            c1: config.c1,
            c2: config.c2,
        },
        grad,
    ))
}

/// Combined loss value only.
pub fn combined_loss_value(
    params: &ParameterVector,
    batch: &TrajectoryBatch,
    indices: &[usize],
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = NetworkVars::attach(&mut tape, params);
    let l = combined_loss(&mut tape, &vars, batch, indices, config)?;
    Ok(LossBreakdown {
        policy_loss: tape.value(l.policy).item(),
        value_loss: tape.value(l.value).item(),
        entropy: tape.value(l.entropy).item(),
        total: tape.value(l.total).item(),
        c1: config.c1,
        c2: config.c2,
    })
}
