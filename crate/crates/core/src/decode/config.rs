use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeMode {
    /// Any masked position may be decoded at any step.
    FullDiffusion,
    /// Left-to-right blocks of `block_len` positions, diffusion inside a block.
    SemiAr { block_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheduler {
    /// `L / S` tokens every step.
    Uniform,
    /// `2^s` tokens at step `s`, one extra token at the final step;
    /// `S = log2 L`.
    Ass,
    /// Ascending step sizes grouped `steps_per_block` at a time into blocks.
    /// The blocks are position spans; in semi-AR mode they replace
    /// `block_len`.
    BlockAss { steps_per_block: usize },
}

/// EOS early rejection bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EoserConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Rescale the ascending-step attenuation so the final step reaches
    /// `gamma_max` exactly. Off by default.
    #[serde(default)]
    pub renormalize_ass: bool,
}

impl EoserConfig {
    /// Bounds used with the uniform scheduler.
    pub fn uniform_default() -> Self {
        Self {
            gamma_min: 0.4,
            gamma_max: 1.0,
            renormalize_ass: false,
        }
    }

    /// Bounds used with the ascending step-size scheduler.
    pub fn ass_default() -> Self {
        Self {
            gamma_min: 0.01,
            gamma_max: 1.0,
            renormalize_ass: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |g: f64| g.is_finite() && g > 0.0 && g <= 1.0;
        if !ok(self.gamma_min) || !ok(self.gamma_max) || self.gamma_max < self.gamma_min {
            return Err(Error::config(format!(
                "EOSER bounds must satisfy 0 < gamma_min <= gamma_max <= 1, got {} / {}",
                self.gamma_min, self.gamma_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub gen_len: usize,
    pub steps: usize,
    pub mode: DecodeMode,
    pub scheduler: Scheduler,
    #[serde(default)]
    pub eoser: Option<EoserConfig>,
    /// EOSER is ignored in semi-AR mode unless this is set.
    #[serde(default)]
    pub eoser_in_semi_ar: bool,
    /// Gumbel noise scale; `0` is greedy.
    #[serde(default)]
    pub temperature: f64,
}

impl DecodeConfig {
    pub fn uniform(gen_len: usize, steps: usize) -> Self {
        Self {
            gen_len,
            steps,
            mode: DecodeMode::FullDiffusion,
            scheduler: Scheduler::Uniform,
            eoser: None,
            eoser_in_semi_ar: false,
            temperature: 0.0,
        }
    }

    /// Ascending step sizes with `log2(gen_len)` steps; `gen_len` should be
    /// a power of two (checked by [`super::build_schedule`]).
    pub fn ass(gen_len: usize) -> Self {
        Self {
            steps: log2_exact(gen_len).unwrap_or(0),
            scheduler: Scheduler::Ass,
            ..Self::uniform(gen_len, 1)
        }
    }

    pub fn semi_ar(gen_len: usize, steps: usize, block_len: usize) -> Self {
        Self {
            mode: DecodeMode::SemiAr { block_len },
            ..Self::uniform(gen_len, steps)
        }
    }

    pub fn with_eoser(mut self, eoser: EoserConfig) -> Self {
        self.eoser = Some(eoser);
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// The attenuation actually applied, after the semi-AR scope rule.
    pub fn effective_eoser(&self) -> Option<EoserConfig> {
        match self.mode {
            DecodeMode::FullDiffusion => self.eoser,
            DecodeMode::SemiAr { .. } if self.eoser_in_semi_ar => self.eoser,
            DecodeMode::SemiAr { .. } => None,
        }
    }
}

pub(crate) fn log2_exact(n: usize) -> Option<usize> {
    (n >= 1 && n.is_power_of_two()).then(|| n.trailing_zeros() as usize)
}
