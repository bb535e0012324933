//! Desk-scale masked diffusion language model laboratory.
//!
//! The crate is organised bottom-up:
//!
//! - [`seqcore`]: vocabulary, masked sequence states, the step convention and
//!   the counter-based RNG contract every other module draws from.
//! - [`predictor`]: the bidirectional mask predictor (a small transformer with
//!   hand-written backward pass), a scripted oracle predictor, the masked
//!   diffusion training losses and a finite-difference gradient checker.
//! - [`decode`]: confidence computation, uniform / ascending step-size
//!   schedulers, EOS early rejection, the rollout driver and trajectory
//!   recording.
//! - [`rl`]: group-relative advantages and the trajectory-consistent policy
//!   optimisation loss, plus the two one-step baselines.
//! - [`tasks`]: toy Countdown and 4x4 Sudoku generators, reward verifiers and
//!   the EOS-padded corpus builder.
//! - [`optim`]: AdamW with decoupled weight decay.

pub mod decode;
pub mod error;
pub mod optim;
pub mod predictor;
pub mod rl;
pub mod seqcore;
pub mod tasks;

pub use error::{Error, Result};
pub use seqcore::{RngStream, SequenceState, StreamId, TokenId, Vocab};
