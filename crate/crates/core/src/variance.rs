//! Surrogate-objective variance: the empirical metric logged during
//! training, and exact computations over enumerated distributions.
//!
//! For a distribution `P` over support pairs with surrogate values `O`, the
//! variance `Σ P_i O_i² − (Σ P_i O_i)²` can be rewritten as
//!
//! ```text
//! Σ_i P_i · [ (1 − P_i)·O_i² − Σ_{j≠i} P_j·O_i·O_j ]
//! ```
//!
//! and dropping the `(1 − P_i)` factor gives an upper bound whose slack is
//! exactly `Σ_i P_i²·O_i²`. Both forms are evaluated here in O(n) so they can
//! be checked against the direct formula.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::env::finite::{dirichlet_ones, RANDOM_MDP_HORIZON};
use crate::env::{enumerate_tables, exact_visitation, random_finite_mdp, FiniteMdpSpec, PolicyTable};
use crate::error::{Error, Result};
use crate::nn::action_distribution;

const PROB_TOL: f64 = 1e-12;

/// Probability vector over (state, action) support pairs with the surrogate
/// value of each pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportDistribution {
    probabilities: Vec<f64>,
    surrogate_values: Vec<f64>,
}

impl SupportDistribution {
    pub fn new(probabilities: Vec<f64>, surrogate_values: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.len() != surrogate_values.len() {
            return Err(Error::Input(format!(
                "support distribution needs equal, non-zero lengths (got {} and {})",
                probabilities.len(),
                surrogate_values.len()
            )));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Input("probabilities must be finite and non-negative".into()));
        }
        if surrogate_values.iter().any(|o| !o.is_finite()) {
            return Err(Error::Input("surrogate values must be finite".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Input(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self {
            probabilities,
            surrogate_values,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn surrogate_values(&self) -> &[f64] {
        &self.surrogate_values
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    fn weighted_mean(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(&self.surrogate_values)
            .map(|(p, o)| p * o)
            .sum()
    }
}

impl fmt::Display for SupportDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P={:?} O={:?}", self.probabilities, self.surrogate_values)
    }
}

/// Population variance of a sample, computed in two passes.
pub fn empirical_variance(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `E[O²] − E[O]²`.
pub fn direct_variance(dist: &SupportDistribution) -> f64 {
    let second: f64 = dist
        .probabilities
        .iter()
        .zip(&dist.surrogate_values)
        .map(|(p, o)| p * o * o)
        .sum();
    let mean = dist.weighted_mean();
    second - mean * mean
}

/// `(1 − P_i)·O_i²` for every support pair.
pub fn self_terms(dist: &SupportDistribution) -> Vec<f64> {
    dist.probabilities
        .iter()
        .zip(&dist.surrogate_values)
        .map(|(p, o)| (1.0 - p) * o * o)
        .collect()
}

/// Variance via the cross-term expansion
/// `Σ_i P_i·[(1 − P_i)·O_i² − O_i·Σ_{j≠i} P_j·O_j]`.
pub fn expanded_variance(dist: &SupportDistribution) -> f64 {
    let mean = dist.weighted_mean();
    dist.probabilities
        .iter()
        .zip(&dist.surrogate_values)
        .zip(self_terms(dist))
        .map(|((p, o), own)| p * (own - o * (mean - p * o)))
        .sum()
}

/// `Σ_i P_i·[O_i² − O_i·Σ_{j≠i} P_j·O_j]`, an upper bound on the variance.
pub fn variance_upper_bound(dist: &SupportDistribution) -> f64 {
    let mean = dist.weighted_mean();
    dist.probabilities
        .iter()
        .zip(&dist.surrogate_values)
        .map(|(p, o)| p * (o * o - o * (mean - p * o)))
        .sum()
}

/// Closed-form gap between the upper bound and the variance: `Σ P_i²·O_i²`.
pub fn bound_slack(dist: &SupportDistribution) -> f64 {
    dist.probabilities
        .iter()
        .zip(&dist.surrogate_values)
        .map(|(p, o)| p * p * o * o)
        .sum()
}

/// `|a − b| / max(|a|, |b|)`, and 0 when both are 0.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub direct_variance: f64,
    pub expanded_variance: f64,
    pub upper_bound: f64,
    pub self_terms: Vec<f64>,
    /// Relative error of the expanded form against the direct form.
    pub max_rel_error: f64,
    /// `upper_bound − direct_variance`.
    pub observed_slack: f64,
    /// Relative error of the observed slack against `Σ P_i²·O_i²`.
    pub slack_rel_error: f64,
}

fn judge(report: &VarianceReport, closed_slack: f64, tolerance: f64) -> Vec<String> {
    let (direct, expanded, bound) = (report.direct_variance, report.expanded_variance, report.upper_bound);
    let mut failures = Vec::new();
    if report.max_rel_error > tolerance {
        failures.push(format!(
            "expanded variance {expanded} vs direct {direct} (rel {:e})",
            report.max_rel_error
        ));
    }
    if report.slack_rel_error > tolerance {
        failures.push(format!(
            "bound slack {} vs closed form {closed_slack} (rel {:e})",
            report.observed_slack, report.slack_rel_error
        ));
    }
    if bound < expanded - tolerance * bound.abs().max(expanded.abs()) {
        failures.push(format!("bound {bound} below variance {expanded}"));
    }
    if direct < -tolerance * bound.abs() {
        failures.push(format!("negative variance {direct}"));
    }
    failures
}

/// Evaluates every form and fails when the expanded variance departs from
/// the direct one, the bound's slack departs from its closed form, or the
/// bound falls below the variance, each judged at relative `tolerance`.
pub fn verify_identities(dist: &SupportDistribution, tolerance: f64) -> Result<VarianceReport> {
    if !(tolerance > 0.0) {
        return Err(Error::Input(format!("tolerance must be positive, got {tolerance}")));
    }
    let direct = direct_variance(dist);
    let expanded = expanded_variance(dist);
    let bound = variance_upper_bound(dist);
    let observed_slack = bound - direct;
    let closed_slack = bound_slack(dist);
    let report = VarianceReport {
        direct_variance: direct,
        expanded_variance: expanded,
        upper_bound: bound,
        self_terms: self_terms(dist),
        max_rel_error: relative_error(expanded, direct),
        observed_slack,
        slack_rel_error: relative_error(observed_slack, closed_slack),
    };
    let failures = judge(&report, closed_slack, tolerance);
    if !failures.is_empty() {
        return Err(Error::Verification(format!("{}; distribution {dist}", failures.join("; "))));
    }
    Ok(report)
}

/// Seeded instance with Dirichlet(1) probabilities over `n` pairs and
/// surrogate values uniform in [-5, 5].
pub fn random_support_distribution(n: usize, seed: u64) -> Result<SupportDistribution> {
    if n == 0 {
        return Err(Error::Input("support size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probabilities = dirichlet_ones(n, &mut rng);
    let surrogate_values = (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect();
    SupportDistribution::new(probabilities, surrogate_values)
}

/// Builds the distribution over every (state, action) pair of `mdp`:
/// `P(s, a) = P(s)·π_old(a|s)` with `P(s)` the exact visitation of `π_old`
/// and `O(s, a) = π_new(a|s) / π_old(a|s) · A_old(s, a)`.
pub fn mdp_support_distribution(
    mdp: &FiniteMdpSpec,
    old_logits: &[Vec<f64>],
    new_logits: &[Vec<f64>],
    discount: f64,
) -> Result<SupportDistribution> {
    if old_logits.len() != mdp.state_count() || new_logits.len() != mdp.state_count() {
        return Err(Error::Input("one logit row per state required".into()));
    }
    let old: PolicyTable = old_logits.iter().map(|l| action_distribution(l)).collect();
    let new: PolicyTable = new_logits.iter().map(|l| action_distribution(l)).collect();
    let visitation = exact_visitation(mdp, &old, mdp.horizon())?;
    let tables = enumerate_tables(mdp, &old, discount)?;
    let mut probabilities = Vec::with_capacity(mdp.state_count() * mdp.action_count());
    let mut surrogate_values = Vec::with_capacity(probabilities.capacity());
    for s in 0..mdp.state_count() {
        if new[s].len() != old[s].len() {
            return Err(Error::Input(format!("logit width mismatch at state {s}")));
        }
        for a in 0..mdp.action_count() {
            probabilities.push(visitation[s] * old[s][a]);
            surrogate_values.push(new[s][a] / old[s][a] * tables.advantage[s][a]);
        }
    }
    // Products of two normalized vectors can drift from 1 by a few ulps.
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    SupportDistribution::new(probabilities, surrogate_values)
}

/// Seeded MDP-grounded instance: a random MDP with at most 8 states and 4
/// actions, random old logits, and new logits perturbed by N(0, 0.5²).
pub fn random_mdp_support_distribution(seed: u64) -> Result<SupportDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = rng.random_range(1..=8);
    let actions = rng.random_range(1..=4);
    let mdp = random_finite_mdp(states, actions, RANDOM_MDP_HORIZON, rng.random())?;
    let old: Vec<Vec<f64>> = (0..states)
        .map(|_| (0..actions).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let new = old
        .iter()
        .map(|row| row.iter().map(|l| l + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect::<Vec<Vec<f64>>>();
    mdp_support_distribution(&mdp, &old, &new, 0.99)
}
