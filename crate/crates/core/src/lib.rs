//! PPO-CLIP with variance-limiting sample dropout, plus exact checks of the
//! surrogate-objective variance identities on enumerable distributions.

// Index loops mirror the matrix notation; `!(x > y)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod dropout;
pub mod env;
pub mod error;
pub mod nn;
pub mod objective;
pub mod rollout;
pub mod trainer;
pub mod variance;

pub use config::{parse_config, parse_config_str, LrDecay, ObjectiveKind, TrainConfig};
pub use dropout::{apply_dropout, phi_values, DropoutConfig, DropoutMode, DropoutReport};
pub use env::{EnvId, EnvSpec, Environment};
pub use error::{Error, Result};
pub use nn::{Activation, AdamState, NetworkArchitecture, ParameterVector};
pub use rollout::{gae_annotate, ActorSet, EpisodeStats, TrajectoryBatch};
pub use trainer::{evaluate, evaluate_params, lr_schedule, run_update, train, EvalResult, RunSummary, UpdateRecord};
pub use variance::{SupportDistribution, VarianceReport};
