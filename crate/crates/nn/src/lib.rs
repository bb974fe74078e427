//! Feedforward networks for the actor and critics: batched forward passes,
//! exact reverse-mode gradients, Adam, Polyak target tracking, a tanh-squashed
//! Gaussian policy head and a bit-exact binary checkpoint format.

pub mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod network;
pub mod policy;

pub use adam::{adam_step, AdamState};
pub use error::{NnError, Result};
pub use network::{param_count, Activation, ForwardCache, Gradients, Network};
pub use policy::{greedy_action, sample_squashed_gaussian, GaussianPolicyOutput};
