use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::seqcore::{open01, Purpose, RngStream, TokenId};

/// Lower clamp on the sampled mask ratio; bounds the `1/t` weight.
pub const T_MIN: f64 = 0.02;

/// How the per-sample mask ratio `t` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskRatio {
    /// `t ~ U(0, 1]`, clamped to `[t_min, 1]`.
    Uniform { t_min: f64 },
    /// Fixed `t`, for tests.
    Fixed { t: f64 },
}

impl Default for MaskRatio {
    fn default() -> Self {
        MaskRatio::Uniform { t_min: T_MIN }
    }
}

impl MaskRatio {
    fn draw(&self, rng: &mut impl Rng) -> Result<f64> {
        match *self {
            MaskRatio::Uniform { t_min } => {
                if !(t_min > 0.0 && t_min <= 1.0) {
                    return Err(Error::config("t_min must lie in (0, 1]"));
                }
                Ok(open01(rng).clamp(t_min, 1.0))
            }
            MaskRatio::Fixed { t } => {
                if !(t > 0.0 && t <= 1.0) {
                    return Err(Error::config("fixed mask ratio must lie in (0, 1]"));
                }
                Ok(t)
            }
        }
    }
}

/// A prompt (never masked) and its clean response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub prompt: Vec<TokenId>,
    pub response: Vec<TokenId>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub masked_tokens: usize,
}

/// Batch mean of `-(1/t) * sum_i 1[r_t^i = MASK] log p(r_0^i | p_0, r_t)`.
///
/// Sample `b` of step `step` draws its mask ratio and mask pattern from the
/// stream `(MaskRatio, b, step)`.
pub fn masked_diffusion_loss(
    params: &ModelParams,
    batch: &[Sample],
    ratio: MaskRatio,
    rng: &RngStream,
    step: u64,
    mask_id: TokenId,
) -> Result<LossOutput> {
    let v = params.config().vocab_size;
    let mut grads = vec![0.0; params.len()];
    let mut total = 0.0;
    let mut masked_tokens = 0;
    let inv_b = if batch.is_empty() {
        0.0
    } else {
        1.0 / batch.len() as f64
    };
    for (b, sample) in batch.iter().enumerate() {
        if let Some(i) = sample.prompt.iter().position(|&t| t == mask_id) {
            return Err(Error::PromptMasked(i));
        }
        let mut g = rng.stream(Purpose::MaskRatio, b as u64, step);
        let t = ratio.draw(&mut g)?;
        let mask: Vec<bool> = sample.response.iter().map(|_| open01(&mut g) < t).collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let mut tokens = sample.prompt.clone();
        tokens.extend(
            sample
                .response
                .iter()
                .zip(&mask)
                .map(|(&tok, &m)| if m { mask_id } else { tok }),
        );
        let cache = params.forward_cached(&tokens)?;
        let mut dlogits = vec![0.0; tokens.len() * v];
        let w = inv_b / t;
        let p_len = sample.prompt.len();
        let mut sample_loss = 0.0;
        for (i, (&target, &m)) in sample.response.iter().zip(&mask).enumerate() {
            if !m {
                continue;
            }
            masked_tokens += 1;
            let row = (p_len + i) * v;
            let probs = &cache.probs[row..row + v];
            sample_loss -= probs[target as usize].max(f64::MIN_POSITIVE).ln();
            let d = &mut dlogits[row..row + v];
            for (dx, &p) in d.iter_mut().zip(probs) {
                *dx = w * p;
            }
            d[target as usize] -= w;
        }
        total += inv_b * sample_loss / t;
        params.backward(&cache, &dlogits, &mut grads);
    }
    Ok(LossOutput {
        loss: total,
        grads,
        masked_tokens,
    })
}

/// Pretraining objective over clean sequences `x_0`; every token is maskable.
pub fn pretrain_loss(
    params: &ModelParams,
    batch: &[Vec<TokenId>],
    ratio: MaskRatio,
    rng: &RngStream,
    step: u64,
    mask_id: TokenId,
) -> Result<LossOutput> {
    let samples: Vec<Sample> = batch
        .iter()
        .map(|x| Sample {
            prompt: Vec::new(),
            response: x.clone(),
        })
        .collect();
    masked_diffusion_loss(params, &samples, ratio, rng, step, mask_id)
}

/// Instruction-tuning objective: prompts stay clean, only response tokens are
/// masked and scored.
pub fn sft_loss(
    params: &ModelParams,
    batch: &[Sample],
    ratio: MaskRatio,
    rng: &RngStream,
    step: u64,
    mask_id: TokenId,
) -> Result<LossOutput> {
    masked_diffusion_loss(params, batch, ratio, rng, step, mask_id)
}
