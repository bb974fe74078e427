//! Hybrid reinforcement learning with an uncertainty-adapted blend of a
//! control prior and an ensemble soft actor-critic agent.

pub mod agent;
pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod hybrid;
pub mod priors;
pub mod task;
pub mod train;
pub mod variants;

pub use agent::{AgentConfig, Formulation, QReduction, SacEnsembleAgent, UpdateStats};
pub use error::{CoreError, Result};
pub use hybrid::{
    adapt_weight_cheq, adapt_weight_core, adapt_weight_schedule, ensemble_uncertainty, mix, mix_residual,
    sample_bernoulli_masks, AdaptSignal, Batch, MixingKind, ReplayBuffer, Transition, WeightAdaptor, WeightConfig,
};
pub use priors::{
    constant_force_prior, gain_schedule, longitudinal_control, racing_prior, stanley_lateral, stanley_law,
    target_velocity, StanleyGains,
};
pub use task::{CartPoleTask, RacingTask, ResetMode, Task, TaskStep};
pub use train::{
    greedy_episode, prior_episode, MemoryRecorder, NullRecorder, Recorder, Streams, TrainOutcome, TrainSettings, Trainer,
};
pub use variants::Variant;
