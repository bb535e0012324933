//! Vocabulary, masked sequence states, step indexing and RNG streams.
//!
//! Step convention: a rollout with `S` denoising steps runs loop indices
//! `s = 0..S`. The state `x_s` has had `s` schedule steps applied, so `x_0` is
//! the fully masked canvas and `x_S` is fully decoded. Loop index `s` advances
//! `x_s -> x_{s+1}`.

mod rng;
mod state;
mod vocab;

pub use rng::{Purpose, RngStream, StreamId};
pub(crate) use rng::open01;
pub use state::SequenceState;
pub use vocab::{TokenId, Vocab, EOS_TOKEN, MASK_TOKEN};

use crate::error::{Error, Result};

/// Total step count of a rollout and the loop indices it consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepConvention {
    total: usize,
}

impl StepConvention {
    pub fn new(total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::config("total denoising steps must be >= 1"));
        }
        Ok(Self { total })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        0..self.total
    }

    pub fn is_final(&self, s: usize) -> bool {
        s + 1 == self.total
    }
}
