use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::{check_action, one_hot, EnvSpec, Environment, Step};
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;
pub(crate) const RANDOM_MDP_HORIZON: usize = 16;

/// `policy[s][a]` = probability of action `a` in state `s`.
pub type PolicyTable = Vec<Vec<f64>>;

/// Tabular MDP with a fixed episode horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdpSpec {
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    reward: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
    horizon: usize,
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Input(format!("{what}: probabilities must lie in [0,1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Input(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

impl FiniteMdpSpec {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let states = transition.len();
        if states == 0 || horizon == 0 {
            return Err(Error::Input("finite MDP needs at least one state and horizon >= 1".into()));
        }
        let actions = transition[0].len();
        if actions == 0 {
            return Err(Error::Input("finite MDP needs at least one action".into()));
        }
        if reward.len() != states || initial_dist.len() != states {
            return Err(Error::Input("reward/initial_dist state count mismatch".into()));
        }
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != actions || reward[s].len() != actions {
                return Err(Error::Input(format!("state {s}: action count mismatch")));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != states {
                    return Err(Error::Input(format!("transition[{s}][{a}] has wrong length")));
                }
                check_prob_vector(row, &format!("transition[{s}][{a}]"))?;
            }
            if reward[s].iter().any(|r| !r.is_finite()) {
                return Err(Error::Input(format!("reward[{s}] not finite")));
            }
        }
        check_prob_vector(&initial_dist, "initial_dist")?;
        Ok(Self {
            transition,
            reward,
            initial_dist,
            horizon,
        })
    }

    pub fn state_count(&self) -> usize {
        self.transition.len()
    }

    pub fn action_count(&self) -> usize {
        self.transition[0].len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.len() != self.state_count() {
            return Err(Error::Input(format!(
                "policy has {} rows, MDP has {} states",
                policy.len(),
                self.state_count()
            )));
        }
        for (s, row) in policy.iter().enumerate() {
            if row.len() != self.action_count() {
                return Err(Error::Input(format!("policy row {s} has wrong action count")));
            }
            check_prob_vector(row, &format!("policy row {s}"))?;
        }
        Ok(())
    }
}

/// Exact finite-horizon action values, state values and advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdpTables {
    pub q_values: Vec<Vec<f64>>,
    pub v_values: Vec<f64>,
    pub advantage: Vec<Vec<f64>>,
}

/// Backward dynamic programming over `mdp.horizon()` steps under a fixed
/// stationary `policy`.
pub fn enumerate_tables(
    mdp: &FiniteMdpSpec,
    policy: &PolicyTable,
    discount: f64,
) -> Result<FiniteMdpTables> {
    mdp.check_policy(policy)?;
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::Input(format!("discount {discount} outside [0,1]")));
    }
    let (ns, na) = (mdp.state_count(), mdp.action_count());
    let mut v = vec![0.0; ns];
    let mut q = vec![vec![0.0; na]; ns];
    for _ in 0..mdp.horizon {
        for s in 0..ns {
            for a in 0..na {
                let future: f64 = mdp.transition[s][a]
                    .iter()
                    .zip(&v)
                    .map(|(p, vn)| p * vn)
                    .sum();
                q[s][a] = mdp.reward[s][a] + discount * future;
            }
        }
        v = (0..ns)
            .map(|s| policy[s].iter().zip(&q[s]).map(|(p, qv)| p * qv).sum())
            .collect();
    }
    let advantage = q
        .iter()
        .zip(&v)
        .map(|(row, vs)| row.iter().map(|qv| qv - vs).collect())
        .collect();
    Ok(FiniteMdpTables {
        q_values: q,
        v_values: v,
        advantage,
    })
}

/// Time-averaged occupancy `P(s) = (1/H) Σ_{t=1..H} Pr(S_t = s)` with
/// `S_1 ~ initial_dist`.
pub fn exact_visitation(mdp: &FiniteMdpSpec, policy: &PolicyTable, horizon: usize) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    if horizon == 0 {
        return Err(Error::Input("visitation horizon must be >= 1".into()));
    }
    let ns = mdp.state_count();
    let mut dist = mdp.initial_dist.clone();
    let mut acc = vec![0.0; ns];
    for t in 0..horizon {
        for (a, d) in acc.iter_mut().zip(&dist) {
            *a += d;
        }
        if t + 1 == horizon {
            break;
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            for (a, pa) in policy[s].iter().enumerate() {
                let w = dist[s] * pa;
                for (n, p) in next.iter_mut().zip(&mdp.transition[s][a]) {
                    *n += w * p;
                }
            }
        }
        dist = next;
    }
    let h = horizon as f64;
    Ok(acc.into_iter().map(|a| a / h).collect())
}

pub(crate) fn dirichlet_ones(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Seeded random MDP: Dirichlet(1) transition rows and initial distribution,
/// rewards uniform in [-1, 1].
pub fn random_finite_mdp(states: usize, actions: usize, horizon: usize, seed: u64) -> Result<FiniteMdpSpec> {
    if states == 0 || actions == 0 {
        return Err(Error::Input("random MDP needs states >= 1 and actions >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transition = (0..states)
        .map(|_| (0..actions).map(|_| dirichlet_ones(states, &mut rng)).collect())
        .collect();
    let reward = (0..states)
        .map(|_| (0..actions).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let initial = dirichlet_ones(states, &mut rng);
    FiniteMdpSpec::new(transition, reward, initial, horizon)
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last
    // index with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Samples episodes from a [`FiniteMdpSpec`], observing one-hot states.
/// Episodes end only at the spec's horizon.
#[derive(Debug, Clone)]
pub struct FiniteMdpEnv {
    mdp: FiniteMdpSpec,
    rng: ChaCha8Rng,
    state: usize,
    steps: usize,
    done: bool,
}

impl FiniteMdpEnv {
    pub fn new(mdp: FiniteMdpSpec) -> Result<Self> {
        if mdp.action_count() < 2 {
            return Err(Error::Input("environment needs at least 2 actions".into()));
        }
        Ok(Self {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: 0,
            steps: 0,
            done: true,
        })
    }

    pub fn mdp(&self) -> &FiniteMdpSpec {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl Environment for FiniteMdpEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: self.mdp.state_count(),
            action_count: self.mdp.action_count(),
            horizon_cap: self.mdp.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = sample_index(&self.mdp.initial_dist, &mut self.rng);
        self.steps = 0;
        self.done = false;
        one_hot(self.state, self.mdp.state_count())
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        check_action(action, &self.spec())?;
        let reward = self.mdp.reward[self.state][action];
        self.state = sample_index(&self.mdp.transition[self.state][action], &mut self.rng);
        self.steps += 1;
        self.done = self.steps >= self.mdp.horizon;
        Ok(Step {
            observation: one_hot(self.state, self.mdp.state_count()),
            reward,
            done: self.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ChainMdp;

    fn uniform(ns: usize, na: usize) -> PolicyTable {
        vec![vec![1.0 / na as f64; na]; ns]
    }

    fn random_policy(ns: usize, na: usize, seed: u64) -> PolicyTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..ns).map(|_| dirichlet_ones(na, &mut rng)).collect()
    }

    #[test]
    fn single_step_single_state() {
        let mdp = FiniteMdpSpec::new(
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![1.0, 0.0]],
            vec![1.0],
            1,
        )
        .unwrap();
        let t = enumerate_tables(&mdp, &uniform(1, 2), 0.0).unwrap();
        assert_eq!(t.v_values, vec![0.5]);
        assert_eq!(t.advantage, vec![vec![0.5, -0.5]]);
    }

    #[test]
    fn no_lookahead_q_is_reward() {
        let mut mdp = random_finite_mdp(5, 3, 1, 4).unwrap();
        mdp.horizon = 1;
        let t = enumerate_tables(&mdp, &random_policy(5, 3, 1), 0.0).unwrap();
        assert_eq!(t.q_values, mdp.reward);
    }

    #[test]
    fn tables_invariants_hold() {
        for seed in 0..20 {
            let mdp = random_finite_mdp(6, 3, 7, seed).unwrap();
            let pi = random_policy(6, 3, seed + 100);
            let t = enumerate_tables(&mdp, &pi, 0.9).unwrap();
            for s in 0..6 {
                let v: f64 = (0..3).map(|a| pi[s][a] * t.q_values[s][a]).sum();
                assert!((v - t.v_values[s]).abs() < 1e-10);
                let adv: f64 = (0..3).map(|a| pi[s][a] * t.advantage[s][a]).sum();
                assert!(adv.abs() < 1e-10);
                for a in 0..3 {
                    assert!((t.advantage[s][a] - (t.q_values[s][a] - t.v_values[s])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn malformed_policy_rejected() {
        let mdp = random_finite_mdp(3, 2, 4, 0).unwrap();
        let mut pi = uniform(3, 2);
        pi[1] = vec![0.7, 0.7];
        assert!(enumerate_tables(&mdp, &pi, 0.9).is_err());
        assert!(exact_visitation(&mdp, &pi, 3).is_err());
        assert!(enumerate_tables(&mdp, &uniform(2, 2), 0.9).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(FiniteMdpSpec::new(vec![vec![vec![0.5, 0.6]]; 2], vec![vec![0.0]; 2], vec![0.5, 0.5], 1).is_err());
        assert!(FiniteMdpSpec::new(vec![vec![vec![1.0]]], vec![vec![0.0]], vec![0.9], 1).is_err());
        assert!(FiniteMdpSpec::new(vec![vec![vec![1.0]]], vec![vec![0.0]], vec![1.0], 0).is_err());
    }

    #[test]
    fn two_state_cycle_visits_each_once() {
        let mdp = FiniteMdpSpec::new(
            vec![vec![vec![0.0, 1.0]; 2], vec![vec![1.0, 0.0]; 2]],
            vec![vec![0.0; 2]; 2],
            vec![1.0, 0.0],
            2,
        )
        .unwrap();
        let p = exact_visitation(&mdp, &uniform(2, 2), 2).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn absorbing_state_has_full_mass() {
        let mdp = FiniteMdpSpec::new(vec![vec![vec![1.0]; 2]], vec![vec![0.0; 2]], vec![1.0], 5).unwrap();
        assert_eq!(exact_visitation(&mdp, &uniform(1, 2), 9).unwrap(), vec![1.0]);
    }

    #[test]
    fn visitation_is_a_distribution() {
        for seed in 0..30 {
            let mdp = random_finite_mdp(7, 3, 10, seed).unwrap();
            let p = exact_visitation(&mdp, &random_policy(7, 3, seed), 1 + seed as usize % 12).unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn chain_right_policy_value() {
        let chain = ChainMdp::new(5).unwrap();
        let mdp = chain.to_finite_mdp();
        let right: PolicyTable = vec![vec![0.0, 1.0]; 5];
        let t = enumerate_tables(&mdp, &right, 1.0).unwrap();
        assert_eq!(t.v_values[0], 1.0);
        let t = enumerate_tables(&mdp, &right, 0.5).unwrap();
        assert_eq!(t.v_values[0], 0.125);
    }

    #[test]
    fn env_is_deterministic_under_seed() {
        let mdp = random_finite_mdp(4, 2, 10, 9).unwrap();
        let run = || {
            let mut env = FiniteMdpEnv::new(mdp.clone()).unwrap();
            let mut trace = vec![env.reset(42)];
            for t in 0..10 {
                let s = env.step(t % 2).unwrap();
                trace.push(s.observation);
                if s.done {
                    assert_eq!(t, 9);
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
