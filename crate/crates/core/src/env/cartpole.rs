use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action, EnvSpec, Environment, Step};
use crate::error::{Error, Result};

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_LIMIT: f64 = 2.4;
const STEP_CAP: usize = 500;
const INIT_BOUND: f64 = 0.05;

/// Cart position, cart velocity, pole angle, pole angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// Classic cart-pole balancing with explicit Euler integration.
///
/// Action 0 pushes left, action 1 pushes right. Every step yields reward 1.
#[derive(Debug, Clone)]
pub struct CartPole {
    state: CartPoleState,
    steps: usize,
    done: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            state: CartPoleState::default(),
            steps: 0,
            done: false,
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// Places the system in an arbitrary state and clears the episode counters.
    pub fn set_state(&mut self, state: CartPoleState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 4,
            action_count: 2,
            horizon_cap: STEP_CAP,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.random_range(-INIT_BOUND..INIT_BOUND);
        self.state = CartPoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
        };
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::Usage("step called on a finished cartpole episode".into()));
        }
        check_action(action, &self.spec())?;

        let CartPoleState {
            x,
            x_dot,
            theta,
            theta_dot,
        } = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

        self.state = CartPoleState {
            x: x + TAU * x_dot,
            x_dot: x_dot + TAU * x_acc,
            theta: theta + TAU * theta_dot,
            theta_dot: theta_dot + TAU * theta_acc,
        };
        self.steps += 1;

        let s = self.state;
        let fell = s.x.abs() > X_LIMIT || s.theta.abs() > THETA_LIMIT;
        self.done = fell || self.steps >= STEP_CAP;
        Ok(Step {
            observation: s.to_vec(),
            reward: 1.0,
            done: self.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_and_bounded() {
        let mut env = CartPole::new();
        let a = env.reset(0);
        let b = env.reset(0);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= INIT_BOUND));
        assert_ne!(env.reset(1), a);
    }

    #[test]
    fn one_euler_step_from_rest_pushing_right() {
        // Hand integration from the zero state with force +10:
        // temp = 10 / 1.1, theta_acc = -temp / (0.5 * (4/3 - 0.1/1.1)),
        // x_acc = temp - 0.05 * theta_acc / 1.1. Positions stay at zero after one
        // Euler step because they advance with the old velocities.
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;

        let mut env = CartPole::new();
        env.set_state(CartPoleState::default());
        let step = env.step(1).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(!step.done);
        let o = step.observation;
        assert_eq!(o[0], 0.0);
        assert_eq!(o[2], 0.0);
        assert!((o[1] - 0.02 * x_acc).abs() < 1e-15);
        assert!((o[3] - 0.02 * theta_acc).abs() < 1e-15);
        assert!((o[1] - 0.195_121_951_219_512_2).abs() < 1e-12);
        assert!((o[3] + 0.292_682_926_829_268_3).abs() < 1e-12);
    }

    #[test]
    fn falls_and_refuses_further_steps() {
        let mut env = CartPole::new();
        env.reset(3);
        let mut n = 0;
        loop {
            n += 1;
            if env.step(1).unwrap().done {
                break;
            }
        }
        assert!(n < STEP_CAP);
        assert!(matches!(env.step(0), Err(Error::Usage(_))));
    }

    #[test]
    fn rejects_out_of_range_action() {
        let mut env = CartPole::new();
        env.reset(0);
        assert!(matches!(env.step(2), Err(Error::Input(_))));
    }

    #[test]
    fn episode_capped_at_horizon() {
        // Alternating pushes keep the pole up for a while; regardless of policy
        // no episode can exceed the cap.
        let mut env = CartPole::new();
        env.reset(11);
        let mut n = 0;
        let mut done = false;
        while !done {
            let theta_dot = env.state().theta_dot;
            let theta = env.state().theta;
            let a = usize::from(theta + 0.5 * theta_dot > 0.0);
            done = env.step(a).unwrap().done;
            n += 1;
        }
        assert!(n <= STEP_CAP);
    }
}
