//! Proximal policy optimization with a tanh-squashed Gaussian policy,
//! generalized advantage estimation and separate policy/value networks.

mod agent;
mod buffer;
mod policy;
mod toy;

pub use agent::{
    collect_rollouts, train, update, write_training_log, EnvSlot, IterationLog, PolicyCheckpoint, PpoConfig,
    PpoOptimizers, TrainOutput, UpdateStats,
};
pub use buffer::{compute_advantages, gae, normalize_advantages, ppo_clip_objective, RolloutBuffer, Segment};
pub use policy::{
    gaussian_log_prob, mlp, sample_action, squash, squash_log_jacobian, ActorCritic, Policy, SampledAction, ValueNet,
    ACTION_BOUND,
};
pub use toy::{evaluate_policy, QuadraticEnv};
