//! Group-relative policy optimisation over stored decoding trajectories.
//!
//! Rollouts record the state before every denoising step. The loss replays
//! each step on its own stored state: the probability of a step's decode is
//! the geometric mean of the probabilities of the tokens decoded at that
//! step, and its ratio to the behavior policy's probability multiplies the
//! group-standardised advantage. [`icj_losses`] score the completion in one
//! forward pass instead, from either a prompt-perturbed final state or the
//! fully masked response.

mod advantage;
mod config;
mod loss;
mod train;

pub use advantage::{compute_advantages, ADV_STD_FLOOR};
pub use config::{BaselineMode, RlConfig, DEFAULT_P_MASK};
pub use loss::{
    cj_step_loss, geometric_mean, icj_losses, kl_estimate, perturb_prompt, step_confidence,
    step_confidences, trajectory_loss, PolicySnapshot, PreparedBatch, RatioStats, RlLoss,
    RolloutGroup, PROB_FLOOR,
};
pub use train::{evaluate, EvalSummary, RlTrainer, RunLogRecord};
