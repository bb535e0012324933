//! From predictor outputs to unmasked tokens.
//!
//! One denoising step of [`rollout`] is: forward pass, per-position candidate
//! and confidence ([`candidate_confidences`]), EOS attenuation
//! ([`apply_eoser`]), top-k selection inside the active region
//! ([`select_positions`]) and [`SequenceState::unmask`](crate::SequenceState::unmask).
//! How many tokens each step decodes, and with which attenuation, comes from
//! [`build_schedule`].

mod config;
mod heatmap;
mod rollout;
mod schedule;
mod select;

pub use config::{DecodeConfig, DecodeMode, EoserConfig, Scheduler};
pub use heatmap::{eos_in_steps, first_eos_step, heatmap_accumulate, Heatmap};
pub use rollout::{rollout, rollout_scheduled, StepRecord, TrajectoryRecord};
pub use schedule::{build_schedule, DecodeSchedule};
pub use select::{apply_eoser, candidate_confidences, select_positions, Candidate};
