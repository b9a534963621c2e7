//! Small dense actor-critic networks with exact reverse-mode gradients.

pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod dist;
pub mod network;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use autodiff::{Gradients, Tape, Var};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint};
pub use dist::{action_distribution, argmax, entropy, log_prob, log_probs};
pub use network::{
    gradient, Activation, ForwardOutput, NetworkArchitecture, NetworkVars, ParameterVector,
    PolicySnapshot,
};
pub use tensor::Tensor;
