use serde::{Deserialize, Serialize};

use crate::decode::{DecodeConfig, EoserConfig};
use crate::error::{Error, Result};
use crate::optim::AdamWConfig;

/// Prompt-token mask probability of the perturbed one-step baseline.
pub const DEFAULT_P_MASK: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineMode {
    /// Replay every stored step of the rollout.
    Cj,
    /// One step from the final state with a perturbed prompt.
    IcjPromptPerturb { p_mask: f64 },
    /// One step from the fully masked response.
    IcjOneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub group_size: usize,
    pub kl_coeff: f64,
    /// Inner optimisation iterations per batch of rollouts.
    pub grpo_iters: usize,
    /// PPO clip range; `0` uses the raw ratio.
    pub clip_eps: f64,
    /// Questions per outer step.
    pub batch_size: usize,
    pub grad_accum: usize,
    /// Gumbel temperature of the rollouts; overrides `decode.temperature`.
    pub temperature: f64,
    pub baseline: BaselineMode,
    pub decode: DecodeConfig,
    pub optimizer: AdamWConfig,
    pub outer_steps: usize,
    pub lambda_fmt: f64,
    /// Log measured wall time; off keeps run logs byte-reproducible.
    #[serde(default)]
    pub record_wall_clock: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self::planning()
    }
}

impl RlConfig {
    /// Settings for planning tasks (Countdown, Sudoku).
    pub fn planning() -> Self {
        Self {
            group_size: 6,
            kl_coeff: 0.04,
            grpo_iters: 8,
            clip_eps: 0.5,
            batch_size: 48,
            grad_accum: 2,
            temperature: 1.0,
            baseline: BaselineMode::Cj,
            decode: DecodeConfig::ass(64).with_eoser(EoserConfig::ass_default()),
            optimizer: AdamWConfig::default(),
            outer_steps: 200,
            lambda_fmt: crate::tasks::DEFAULT_LAMBDA_FMT,
            record_wall_clock: false,
        }
    }

    /// Settings for math reasoning tasks.
    pub fn math() -> Self {
        Self {
            grpo_iters: 12,
            ..Self::planning()
        }
    }

    pub fn rollout_decode(&self) -> DecodeConfig {
        self.decode.with_temperature(self.temperature)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::config("group_size must be >= 2"));
        }
        if self.grpo_iters == 0 || self.batch_size == 0 || self.grad_accum == 0 {
            return Err(Error::config("grpo_iters, batch_size and grad_accum must be >= 1"));
        }
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.kl_coeff) || !nonneg(self.clip_eps) || !nonneg(self.temperature) {
            return Err(Error::config("kl_coeff, clip_eps and temperature must be finite and >= 0"));
        }
        if !nonneg(self.lambda_fmt) {
            return Err(Error::config("lambda_fmt must be finite and >= 0"));
        }
        if let BaselineMode::IcjPromptPerturb { p_mask } = self.baseline {
            if !(0.0..=1.0).contains(&p_mask) {
                return Err(Error::config("p_mask must lie in [0, 1]"));
            }
        }
        crate::decode::build_schedule(&self.rollout_decode()).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = RlConfig::planning();
        assert_eq!((p.group_size, p.grpo_iters, p.batch_size, p.grad_accum), (6, 8, 48, 2));
        assert_eq!((p.kl_coeff, p.clip_eps, p.temperature), (0.04, 0.5, 1.0));
        assert_eq!(RlConfig::math().grpo_iters, 12);
        p.validate().unwrap();
        assert!(RlConfig { group_size: 1, ..p }.validate().is_err());
        assert!(RlConfig { grpo_iters: 0, ..p }.validate().is_err());
    }
}
