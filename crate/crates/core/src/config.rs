//! Training configuration: flat `key = value` text with `#` comments.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::dropout::{DropoutConfig, DropoutMode};
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::objective::{LossConfig, PolicyObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrDecay {
    Linear,
    Constant,
}

impl fmt::Display for LrDecay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrDecay::Linear => "linear",
            LrDecay::Constant => "constant",
        })
    }
}

impl FromStr for LrDecay {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LrDecay::Linear),
            "constant" => Ok(LrDecay::Constant),
            _ => Err(Error::Input(format!("unknown lr decay {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Clip,
    Penalty,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Clip => "clip",
            ObjectiveKind::Penalty => "penalty",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(ObjectiveKind::Clip),
            "penalty" => Ok(ObjectiveKind::Penalty),
            _ => Err(Error::Input(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env_id: Option<EnvId>,
    pub seed: u64,
    pub actors: usize,
    pub horizon: usize,
    pub lr0: f64,
    pub lr_decay: LrDecay,
    pub total_steps: u64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub c1: f64,
    pub c2: f64,
    pub dropout: DropoutConfig,
    pub advantage_normalization: bool,
    pub objective: ObjectiveKind,
    pub penalty_beta: f64,
    pub trunk: Vec<usize>,
    pub activation: Activation,
    /// Updates between checkpoints.
    pub checkpoint_every: usize,
    /// Episodes in the rolling return mean.
    pub return_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env_id: None,
            seed: 0,
            actors: 8,
            horizon: 256,
            lr0: 2.5e-4,
            lr_decay: LrDecay::Linear,
            total_steps: 10_000_000,
            epochs: 4,
            minibatch_size: 512,
            gae_lambda: 0.95,
            gamma: 0.99,
            clip_epsilon: 0.1,
            c1: 1.0,
            c2: 0.01,
            dropout: DropoutConfig::default(),
            advantage_normalization: false,
            objective: ObjectiveKind::Clip,
            penalty_beta: 1.0,
            trunk: vec![64, 64],
            activation: Activation::Tanh,
            checkpoint_every: 50,
            return_window: 20,
        }
    }
}

/// Every accepted key with the form its value must take.
const KEYS: &[(&str, &str)] = &[
    ("env_id", "cartpole, chain:<n> or randmdp:<states>x<actions>:<seed>"),
    ("seed", "an unsigned integer"),
    ("actors", "an integer >= 1"),
    ("horizon", "an integer >= 1"),
    ("lr0", "a finite real >= 0"),
    ("lr_decay", "linear or constant"),
    ("total_steps", "an integer >= 1"),
    ("epochs", "an integer >= 1"),
    ("minibatch_size", "an integer >= 1"),
    ("gae_lambda", "a real in [0,1]"),
    ("gamma", "a real in [0,1]"),
    ("clip_epsilon", "a real > 0"),
    ("c1", "a finite real >= 0"),
    ("c2", "a finite real >= 0"),
    ("dropout.mode", "off, ratio or threshold"),
    ("dropout.r", "a real in [0,1]"),
    ("dropout.delta_plus", "a real"),
    ("dropout.delta_minus", "a real"),
    ("advantage_normalization", "true or false"),
    ("objective", "clip or penalty"),
    ("penalty_beta", "a finite real >= 0"),
    ("network.trunk", "comma-separated layer widths, e.g. 64,64"),
    ("network.activation", "tanh or relu"),
    ("checkpoint_every", "an integer >= 1"),
    ("return_window", "an integer >= 1"),
];

fn expected_form(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, form)| *form)
}

fn parse_positive(v: &str) -> Option<usize> {
    v.parse().ok().filter(|&n: &usize| n >= 1)
}

fn parse_real(v: &str, ok: impl Fn(f64) -> bool) -> Option<f64> {
    v.parse().ok().filter(|&x: &f64| !x.is_nan() && ok(x))
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn finite_non_negative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.actors * self.horizon
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            objective: match self.objective {
                ObjectiveKind::Clip => PolicyObjective::Clip {
                    epsilon: self.clip_epsilon,
                },
                ObjectiveKind::Penalty => PolicyObjective::Penalty {
                    beta: self.penalty_beta,
                },
            },
            c1: self.c1,
            c2: self.c2,
            normalize_advantages: self.advantage_normalization,
        }
    }

    /// Sets one key. On failure returns the specific complaint, which the
    /// caller places alongside the key and line.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let form = expected_form(key).ok_or_else(|| "unknown key".to_string())?;
        let bad = || format!("expected {form}, got {value:?}");
        match key {
            "env_id" => {
                self.env_id = if value.is_empty() {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad())?)
                }
            }
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "actors" => self.actors = parse_positive(value).ok_or_else(bad)?,
            "horizon" => self.horizon = parse_positive(value).ok_or_else(bad)?,
            "lr0" => self.lr0 = parse_real(value, finite_non_negative).ok_or_else(bad)?,
            "lr_decay" => self.lr_decay = value.parse().map_err(|_| bad())?,
            "total_steps" => self.total_steps = value.parse().ok().filter(|&n: &u64| n >= 1).ok_or_else(bad)?,
            "epochs" => self.epochs = parse_positive(value).ok_or_else(bad)?,
            "minibatch_size" => self.minibatch_size = parse_positive(value).ok_or_else(bad)?,
            "gae_lambda" => self.gae_lambda = parse_real(value, unit_interval).ok_or_else(bad)?,
            "gamma" => self.gamma = parse_real(value, unit_interval).ok_or_else(bad)?,
            "clip_epsilon" => {
                self.clip_epsilon = parse_real(value, |x| x.is_finite() && x > 0.0).ok_or_else(bad)?
            }
            "c1" => self.c1 = parse_real(value, finite_non_negative).ok_or_else(bad)?,
            "c2" => self.c2 = parse_real(value, finite_non_negative).ok_or_else(bad)?,
            "dropout.mode" => self.dropout.mode = value.parse().map_err(|_| bad())?,
            "dropout.r" => {
                let r: f64 = value.parse().map_err(|_| bad())?;
                if !unit_interval(r) {
                    return Err(format!("r must lie in [0,1], got {value}"));
                }
                self.dropout.ratio = r;
            }
            "dropout.delta_plus" => self.dropout.delta_plus = parse_real(value, |_| true).ok_or_else(bad)?,
            "dropout.delta_minus" => self.dropout.delta_minus = parse_real(value, |_| true).ok_or_else(bad)?,
            "advantage_normalization" => self.advantage_normalization = value.parse().map_err(|_| bad())?,
            "objective" => self.objective = value.parse().map_err(|_| bad())?,
            "penalty_beta" => self.penalty_beta = parse_real(value, finite_non_negative).ok_or_else(bad)?,
            "network.trunk" => {
                let widths: Option<Vec<usize>> = value.split(',').map(|w| parse_positive(w.trim())).collect();
                self.trunk = widths.filter(|w| !w.is_empty()).ok_or_else(bad)?;
            }
            "network.activation" => self.activation = value.parse().map_err(|_| bad())?,
            "checkpoint_every" => self.checkpoint_every = parse_positive(value).ok_or_else(bad)?,
            "return_window" => self.return_window = parse_positive(value).ok_or_else(bad)?,
            _ => unreachable!("key table and match arms disagree on {key}"),
        }
        Ok(())
    }

    /// Cross-field checks that no single key can enforce.
    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size > self.batch_size() {
            return Err(Error::Config(format!(
                "minibatch_size {} exceeds batch size actors*horizon = {}",
                self.minibatch_size,
                self.batch_size()
            )));
        }
        if self.total_steps < self.batch_size() as u64 {
            return Err(Error::Config(format!(
                "total_steps {} is below one batch ({} steps)",
                self.total_steps,
                self.batch_size()
            )));
        }
        if self.dropout.mode == DropoutMode::Threshold && self.dropout.delta_minus > 0.0 {
            log::warn!("dropout.delta_minus > 0 drops every negative-part sample");
        }
        self.dropout.validate()
    }

    /// Full `key = value` dump in a fixed order; parses back to `self`.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        let env = self.env_id.map(|e| e.to_string()).unwrap_or_default();
        let trunk: Vec<String> = self.trunk.iter().map(|w| w.to_string()).collect();
        let values: [(&str, String); 25] = [
            ("env_id", env),
            ("seed", self.seed.to_string()),
            ("actors", self.actors.to_string()),
            ("horizon", self.horizon.to_string()),
            ("lr0", self.lr0.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("epochs", self.epochs.to_string()),
            ("minibatch_size", self.minibatch_size.to_string()),
            ("gae_lambda", self.gae_lambda.to_string()),
            ("gamma", self.gamma.to_string()),
            ("clip_epsilon", self.clip_epsilon.to_string()),
            ("c1", self.c1.to_string()),
            ("c2", self.c2.to_string()),
            ("dropout.mode", self.dropout.mode.to_string()),
            ("dropout.r", self.dropout.ratio.to_string()),
            ("dropout.delta_plus", self.dropout.delta_plus.to_string()),
            ("dropout.delta_minus", self.dropout.delta_minus.to_string()),
            ("advantage_normalization", self.advantage_normalization.to_string()),
            ("objective", self.objective.to_string()),
            ("penalty_beta", self.penalty_beta.to_string()),
            ("network.trunk", trunk.join(",")),
            ("network.activation", self.activation.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("return_window", self.return_window.to_string()),
        ];
        for (k, v) in values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn apply(config: &mut TrainConfig, key: &str, value: &str, location: &str) -> Result<()> {
    config.set(key, value).map_err(|why| match expected_form(key) {
        Some(_) => Error::Config(format!("{location}: key `{key}`: {why}")),
        None => Error::Config(format!("{location}: unknown key `{key}`")),
    })
}

fn split_pair(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parses config text, then applies `key=value` overrides in order.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let location = format!("line {}", n + 1);
        let (key, value) =
            split_pair(line).ok_or_else(|| Error::Config(format!("{location}: expected `key = value`, got {line:?}")))?;
        apply(&mut config, key, value, &location)?;
    }
    for (i, item) in overrides.iter().enumerate() {
        let location = format!("override {} ({item:?})", i + 1);
        let (key, value) =
            split_pair(item).ok_or_else(|| Error::Config(format!("{location}: expected `key=value`")))?;
        apply(&mut config, key, value, &location)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}
