use super::{check_action, one_hot, EnvSpec, Environment, FiniteMdpSpec, Step};
use crate::error::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// A corridor of `length` states. The agent starts at state 0; moving right
/// into the last state pays 1 and ends the episode. Every other move pays 0.
/// Moving left from state 0 stays put.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    length: usize,
    state: usize,
    steps: usize,
    done: bool,
}

impl ChainMdp {
    pub fn new(length: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::Input(format!("chain needs at least 2 states, got {length}")));
        }
        Ok(Self {
            length,
            state: 0,
            steps: 0,
            done: false,
        })
    }

    pub fn horizon_cap(length: usize) -> usize {
        4 * length
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Moves the agent to `state` without touching the step counter.
    pub fn set_state(&mut self, state: usize) -> Result<()> {
        if state >= self.length {
            return Err(Error::Input(format!("state {state} outside chain of {}", self.length)));
        }
        self.state = state;
        self.done = state + 1 == self.length;
        Ok(())
    }

    /// The same chain as an explicit finite MDP. The goal is absorbing with
    /// zero reward, so finite-horizon returns coincide with the episodic ones.
    pub fn to_finite_mdp(&self) -> FiniteMdpSpec {
        let n = self.length;
        let mut transition = vec![vec![vec![0.0; n]; 2]; n];
        let mut reward = vec![vec![0.0; 2]; n];
        for s in 0..n {
            if s + 1 == n {
                transition[s][LEFT][s] = 1.0;
                transition[s][RIGHT][s] = 1.0;
                continue;
            }
            transition[s][LEFT][s.saturating_sub(1)] = 1.0;
            transition[s][RIGHT][s + 1] = 1.0;
            if s + 2 == n {
                reward[s][RIGHT] = 1.0;
            }
        }
        FiniteMdpSpec::new(
            transition,
            reward,
            one_hot(0, n),
            Self::horizon_cap(n),
        )
        .expect("chain tables are well formed")
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: self.length,
            action_count: 2,
            horizon_cap: Self::horizon_cap(self.length),
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.state = 0;
        self.steps = 0;
        self.done = false;
        one_hot(0, self.length)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::Usage("step called on a finished chain episode".into()));
        }
        check_action(action, &self.spec())?;
        self.state = match action {
            LEFT => self.state.saturating_sub(1),
            _ => self.state + 1,
        };
        self.steps += 1;
        let at_goal = self.state + 1 == self.length;
        self.done = at_goal || self.steps >= Self::horizon_cap(self.length);
        Ok(Step {
            observation: one_hot(self.state, self.length),
            reward: if at_goal { 1.0 } else { 0.0 },
            done: self.done,
        })
    }
}
