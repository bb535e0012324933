use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{masked_diffusion_loss, MaskRatio, Sample};
use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::optim::{AdamWConfig, AdamWState};
use crate::seqcore::{Purpose, RngStream, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub mask_ratio: MaskRatio,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 16,
            optimizer: AdamWConfig {
                lr: 3e-3,
                ..AdamWConfig::default()
            },
            mask_ratio: MaskRatio::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub masked_tokens: usize,
}

/// Minibatch AdamW on the masked diffusion loss. Pretraining passes samples
/// with empty prompts.
///
/// Step `k` draws its batch indices from stream `(Misc, 0, k)` and its mask
/// ratios and patterns from `(MaskRatio, b, k)`.
#[derive(Debug, Clone)]
pub struct SupervisedTrainer<'a> {
    cfg: SupervisedConfig,
    samples: &'a [Sample],
    rng: RngStream,
    mask_id: TokenId,
    pub params: ModelParams,
    pub opt: AdamWState,
    /// Number of completed steps.
    pub step: usize,
}

impl<'a> SupervisedTrainer<'a> {
    pub fn new(
        cfg: SupervisedConfig,
        samples: &'a [Sample],
        params: ModelParams,
        rng: RngStream,
        mask_id: TokenId,
    ) -> Result<Self> {
        let opt = AdamWState::new(params.len());
        Self::resume(cfg, samples, params, opt, 0, rng, mask_id)
    }

    pub fn resume(
        cfg: SupervisedConfig,
        samples: &'a [Sample],
        params: ModelParams,
        opt: AdamWState,
        step: usize,
        rng: RngStream,
        mask_id: TokenId,
    ) -> Result<Self> {
        if samples.is_empty() || cfg.batch_size == 0 {
            return Err(Error::config("supervised training needs samples and batch_size >= 1"));
        }
        if opt.m.len() != params.len() {
            return Err(Error::ShapeMismatch("optimizer state does not match the model".into()));
        }
        Ok(Self {
            cfg,
            samples,
            rng,
            mask_id,
            params,
            opt,
            step,
        })
    }

    pub fn config(&self) -> &SupervisedConfig {
        &self.cfg
    }

    pub fn step(&mut self) -> Result<SupervisedRecord> {
        let k = self.step;
        let mut r = self.rng.stream(Purpose::Misc, 0, k as u64);
        let batch: Vec<Sample> = (0..self.cfg.batch_size)
            .map(|_| self.samples[r.random_range(0..self.samples.len())].clone())
            .collect();
        let out = masked_diffusion_loss(
            &self.params,
            &batch,
            self.cfg.mask_ratio,
            &self.rng,
            k as u64,
            self.mask_id,
        )
        .map_err(|e| match e {
            Error::NumericalOverflow { .. } => Error::Diverged { step: k },
            e => e,
        })?;
        if !out.loss.is_finite() || out.grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step: k });
        }
        let backup = (self.params.data.clone(), self.opt.clone());
        let grad_norm = self.opt.update(&self.cfg.optimizer, &mut self.params.data, &out.grads);
        if !self.params.all_finite() {
            (self.params.data, self.opt) = backup;
            return Err(Error::Diverged { step: k });
        }
        self.params.round_to_f32();
        self.opt.round_to_f32();
        self.step += 1;
        Ok(SupervisedRecord {
            step: k,
            loss: out.loss,
            grad_norm,
            masked_tokens: out.masked_tokens,
        })
    }

    /// Runs until `cfg.steps` steps are done.
    pub fn run(
        &mut self,
        mut on_step: impl FnMut(&SupervisedRecord, &Self) -> Result<()>,
    ) -> Result<Vec<SupervisedRecord>> {
        let mut log = Vec::new();
        while self.step < self.cfg.steps {
            let rec = self.step()?;
            on_step(&rec, self)?;
            log.push(rec);
        }
        Ok(log)
    }
}
