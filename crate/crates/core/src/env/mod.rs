//! Environments: a small discrete-action interface, CartPole, a chain MDP,
//! seeded random finite MDPs, and exact enumeration over finite MDPs.

mod cartpole;
mod chain;
pub(crate) mod finite;

pub use cartpole::{CartPole, CartPoleState};
pub use chain::ChainMdp;
pub use finite::{
    enumerate_tables, exact_visitation, random_finite_mdp, FiniteMdpEnv, FiniteMdpSpec,
    FiniteMdpTables, PolicyTable,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shape of an environment's observation and action spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_count: usize,
    pub horizon_cap: usize,
}

impl EnvSpec {
    pub fn new(observation_dim: usize, action_count: usize, horizon_cap: usize) -> Result<Self> {
        if observation_dim < 1 || action_count < 2 || horizon_cap < 1 {
            return Err(Error::Input(format!(
                "env spec requires observation_dim >= 1, action_count >= 2, horizon_cap >= 1; \
                 got {observation_dim}, {action_count}, {horizon_cap}"
            )));
        }
        Ok(Self {
            observation_dim,
            action_count,
            horizon_cap,
        })
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// One recorded environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub next_observation: Vec<f64>,
}

/// A discrete-action episodic environment.
///
/// `done` is reported both for true terminal states and when the step
/// counter reaches `horizon_cap`.
pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. Identical seeds yield identical observations.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<Step>;
}

pub(crate) fn check_action(action: usize, spec: &EnvSpec) -> Result<()> {
    if action >= spec.action_count {
        return Err(Error::Input(format!(
            "action {action} out of range for {} actions",
            spec.action_count
        )));
    }
    Ok(())
}

pub(crate) fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Environment identifier as accepted on the command line:
/// `cartpole`, `chain:<n>`, `randmdp:<states>x<actions>:<seed>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    CartPole,
    Chain { length: usize },
    RandomMdp { states: usize, actions: usize, seed: u64 },
}

impl EnvId {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match *self {
            EnvId::CartPole => Box::new(CartPole::new()),
            EnvId::Chain { length } => Box::new(ChainMdp::new(length)?),
            EnvId::RandomMdp {
                states,
                actions,
                seed,
            } => Box::new(FiniteMdpEnv::new(random_finite_mdp(
                states,
                actions,
                finite::RANDOM_MDP_HORIZON,
                seed,
            )?)?),
        })
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Input(format!(
                "unknown environment id {s:?}; expected cartpole, chain:<n> or randmdp:<states>x<actions>:<seed>"
            ))
        };
        let s = s.trim();
        if s == "cartpole" {
            return Ok(EnvId::CartPole);
        }
        if let Some(rest) = s.strip_prefix("chain:") {
            let length = rest.parse().map_err(|_| bad())?;
            return Ok(EnvId::Chain { length });
        }
        if let Some(rest) = s.strip_prefix("randmdp:") {
            let (shape, seed) = rest.split_once(':').ok_or_else(bad)?;
            let (states, actions) = shape.split_once('x').ok_or_else(bad)?;
            return Ok(EnvId::RandomMdp {
                states: states.parse().map_err(|_| bad())?,
                actions: actions.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvId::CartPole => write!(f, "cartpole"),
            EnvId::Chain { length } => write!(f, "chain:{length}"),
            EnvId::RandomMdp {
                states,
                actions,
                seed,
            } => write!(f, "randmdp:{states}x{actions}:{seed}"),
        }
    }
}
