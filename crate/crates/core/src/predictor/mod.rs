//! Mask predictors and their training losses.
//!
//! [`ModelParams`] is a small pre-norm transformer with no causal mask: every
//! output position attends to every input position. Its backward pass is
//! written out by hand and verified against central finite differences by
//! [`grad_check`]. [`OraclePredictor`] returns scripted rows and lets the
//! decoding logic be tested without any training.

mod checkpoint;
mod gradcheck;
mod linalg;
mod loss;
mod model;
mod oracle;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{
    masked_diffusion_loss, pretrain_loss, sft_loss, LossOutput, MaskRatio, Sample, T_MIN,
};
pub use model::{ForwardCache, ModelConfig, ModelParams, ParamBlock};
pub use oracle::OraclePredictor;
pub use train::{SupervisedConfig, SupervisedRecord, SupervisedTrainer};

use crate::error::Result;
use crate::seqcore::{SequenceState, TokenId};

/// Per-position categorical distributions over the vocabulary for a full
/// `prompt ++ response` input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorOutput {
    pub prompt_len: usize,
    pub vocab_size: usize,
    /// `(P + L) x |V|`, row-major.
    pub logits: Vec<f64>,
    /// Softmax of `logits`, same shape.
    pub probs: Vec<f64>,
}

impl PredictorOutput {
    pub fn rows(&self) -> usize {
        self.probs.len() / self.vocab_size
    }

    pub fn probs_row(&self, row: usize) -> &[f64] {
        &self.probs[row * self.vocab_size..(row + 1) * self.vocab_size]
    }

    pub fn logits_row(&self, row: usize) -> &[f64] {
        &self.logits[row * self.vocab_size..(row + 1) * self.vocab_size]
    }

    /// Row for response position `i`.
    pub fn response_probs(&self, i: usize) -> &[f64] {
        self.probs_row(self.prompt_len + i)
    }

    pub fn response_logits(&self, i: usize) -> &[f64] {
        self.logits_row(self.prompt_len + i)
    }
}

/// Anything that maps a partially masked sequence to per-position token
/// distributions. Implementations must be deterministic.
pub trait MaskPredictor {
    fn vocab_size(&self) -> usize;

    fn predict(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<PredictorOutput>;

    fn forward(&self, state: &SequenceState) -> Result<PredictorOutput> {
        self.predict(state.prompt(), state.response())
    }
}

impl<P: MaskPredictor + ?Sized> MaskPredictor for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<PredictorOutput> {
        (**self).predict(prompt, response)
    }
}

/// Wraps a predictor and counts forward passes.
#[derive(Debug)]
pub struct CountingPredictor<P> {
    inner: P,
    calls: std::sync::atomic::AtomicUsize,
}

impl<P> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, std::sync::atomic::Ordering::Relaxed)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: MaskPredictor> MaskPredictor for CountingPredictor<P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn predict(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<PredictorOutput> {
        self.calls
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.predict(prompt, response)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
