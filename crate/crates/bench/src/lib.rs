//! Shared fixtures for the criterion benchmarks.

use mdlm_core::predictor::{ModelConfig, ModelParams};
use mdlm_core::{TokenId, Vocab};

/// A randomly initialised predictor sized for responses of `gen_len` tokens.
pub fn model(vocab: &Vocab, d_model: usize, gen_len: usize) -> ModelParams {
    let cfg = ModelConfig {
        vocab_size: vocab.size(),
        d_model,
        n_layers: 2,
        n_heads: 4,
        d_ff: 4 * d_model,
        max_len: gen_len + 16,
    };
    ModelParams::init(cfg, 7).expect("valid bench model")
}

/// A short Countdown prompt.
pub fn prompt(vocab: &Vocab) -> Vec<TokenId> {
    vocab.encode("3,7,12=33").expect("prompt is in the toy vocabulary")
}
