use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mdlm_core::decode::{build_schedule, DecodeConfig, EoserConfig, Scheduler};
use mdlm_core::optim::AdamWConfig;
use mdlm_core::predictor::{ModelConfig, SupervisedConfig};
use mdlm_core::rl::{BaselineMode, RlConfig};
use mdlm_core::tasks::TaskMix;
use mdlm_core::Vocab;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Sft,
    Rl,
    Eval,
    Generate,
    Heatmap,
    Ablate,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Response length `L`; every answer is EOS-padded to it.
    pub gen_len: usize,
    pub corpus_size: usize,
    pub eval_size: usize,
    /// Questions the policy optimisation phase samples from.
    pub rl_questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapConfig {
    pub rollouts: usize,
    pub decode: DecodeConfig,
    /// Second heatmap with this attenuation added to `decode`.
    #[serde(default)]
    pub eoser: Option<EoserConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum AblationAxis {
    /// Evaluate each decoding strategy at each number of steps.
    Steps { values: Vec<usize> },
    /// Compare uniform and ascending step-size schedules.
    Scheduler,
    /// Semi-AR with each block length against full diffusion.
    DecodeMode { block_lens: Vec<usize> },
    /// One policy optimisation run per baseline mode.
    Baseline { values: Vec<BaselineMode> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    #[serde(flatten)]
    pub axis: AblationAxis,
    /// Upper bound on the number of grid cells.
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub task: TaskMix,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub pretrain: SupervisedConfig,
    pub sft: SupervisedConfig,
    /// Decoding used by `eval`, `generate` and the ablations.
    pub decode: DecodeConfig,
    pub rl: RlConfig,
    pub heatmap: HeatmapConfig,
    pub ablate: AblationGrid,
    /// Write a resumable checkpoint every this many training steps.
    pub checkpoint_every: usize,
    /// Start from this checkpoint instead of the phase's default input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vocab = Vocab::toy();
        let gen_len = 64;
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            task: TaskMix::default(),
            model: ModelConfig {
                vocab_size: vocab.size(),
                d_model: 64,
                n_layers: 2,
                n_heads: 4,
                d_ff: 256,
                max_len: 96,
            },
            data: DataConfig {
                gen_len,
                corpus_size: 4000,
                eval_size: 200,
                rl_questions: 500,
            },
            pretrain: SupervisedConfig {
                steps: 5000,
                batch_size: 16,
                optimizer: AdamWConfig {
                    lr: 2e-3,
                    ..AdamWConfig::default()
                },
                ..SupervisedConfig::default()
            },
            sft: SupervisedConfig {
                steps: 1000,
                batch_size: 16,
                optimizer: AdamWConfig {
                    lr: 1e-3,
                    ..AdamWConfig::default()
                },
                ..SupervisedConfig::default()
            },
            decode: DecodeConfig::ass(gen_len).with_eoser(EoserConfig::ass_default()),
            rl: RlConfig {
                optimizer: AdamWConfig {
                    lr: 2e-4,
                    ..AdamWConfig::default()
                },
                decode: DecodeConfig::ass(gen_len).with_eoser(EoserConfig::ass_default()),
                ..RlConfig::planning()
            },
            heatmap: HeatmapConfig {
                rollouts: 200,
                decode: DecodeConfig::uniform(gen_len, gen_len / 2).with_temperature(1.0),
                eoser: Some(EoserConfig::uniform_default()),
            },
            ablate: AblationGrid {
                axis: AblationAxis::Steps {
                    values: vec![1, 2, 4, 8, 16],
                },
                cap: 64,
            },
            checkpoint_every: 250,
            init_checkpoint: None,
        }
    }
}

fn field<T>(name: &str, r: mdlm_core::Result<T>) -> Result<T> {
    r.with_context(|| format!("invalid field `{name}`"))
}

impl RunConfig {
    /// Resizes the response length and the uniform and ASS decoding schedules
    /// to `gen_len`. Uniform schedules get `gen_len / 2` steps.
    pub fn with_gen_len(mut self, gen_len: usize) -> Self {
        self.data.gen_len = gen_len;
        let log2 = (gen_len as f64).log2().round() as usize;
        for d in [&mut self.decode, &mut self.rl.decode, &mut self.heatmap.decode] {
            d.gen_len = gen_len;
            d.steps = match d.scheduler {
                Scheduler::Uniform => (gen_len / 2).max(1),
                Scheduler::Ass => log2,
                Scheduler::BlockAss { .. } => d.steps,
            };
        }
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing run config")?;
        if cfg.version != CONFIG_VERSION {
            bail!(
                "invalid field `version`: config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            );
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let vocab = Vocab::toy();
        field("model", self.model.validate())?;
        if self.model.vocab_size != vocab.size() {
            bail!(
                "invalid field `model.vocab_size`: must equal the vocabulary size {}",
                vocab.size()
            );
        }
        let l = self.data.gen_len;
        if l == 0 || self.data.corpus_size == 0 || self.data.eval_size == 0 || self.data.rl_questions == 0 {
            bail!("invalid field `data`: sizes must be >= 1");
        }
        if l + 16 > self.model.max_len {
            bail!(
                "invalid field `model.max_len`: {} leaves no room for prompts with gen_len {l}",
                self.model.max_len
            );
        }
        for (name, d) in [("decode", &self.decode), ("rl.decode", &self.rl.decode), ("heatmap.decode", &self.heatmap.decode)] {
            if d.gen_len != l {
                bail!("invalid field `{name}.gen_len`: {} differs from data.gen_len {l}", d.gen_len);
            }
            field(name, build_schedule(d))?;
        }
        field("rl", self.rl.validate())?;
        if let Some(e) = &self.heatmap.eoser {
            field("heatmap.eoser", e.validate())?;
        }
        for (name, s) in [("pretrain", &self.pretrain), ("sft", &self.sft)] {
            if s.batch_size == 0 {
                bail!("invalid field `{name}.batch_size`: must be >= 1");
            }
        }
        if self.checkpoint_every == 0 {
            bail!("invalid field `checkpoint_every`: must be >= 1");
        }
        Ok(())
    }
}
