use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::config::{log2_exact, DecodeConfig, DecodeMode, EoserConfig, Scheduler};
use crate::error::{Error, Result};

/// Per-step token counts, EOS attenuation and active blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeSchedule {
    pub sizes: Vec<usize>,
    pub gammas: Vec<f64>,
    pub block_of_step: Vec<usize>,
    /// Position span of each block; a single span covering the whole response
    /// in full-diffusion mode.
    pub blocks: Vec<Range<usize>>,
}

impl DecodeSchedule {
    pub fn steps(&self) -> usize {
        self.sizes.len()
    }

    pub fn gen_len(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Region of response positions that step `s` may decode.
    pub fn region(&self, s: usize) -> Range<usize> {
        self.blocks[self.block_of_step[s]].clone()
    }

    /// Tokens decoded after steps `0..=s`.
    pub fn cumulative(&self, s: usize) -> usize {
        self.sizes[..=s].iter().sum()
    }

    /// Structured text dump, used by golden-file tests.
    pub fn to_text(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            steps: usize,
            gen_len: usize,
            sizes: &'a [usize],
            gammas: &'a [f64],
            block_of_step: &'a [usize],
            block_starts: Vec<usize>,
            block_ends: Vec<usize>,
        }
        toml::to_string(&Dump {
            steps: self.steps(),
            gen_len: self.gen_len(),
            sizes: &self.sizes,
            gammas: &self.gammas,
            block_of_step: &self.block_of_step,
            block_starts: self.blocks.iter().map(|b| b.start).collect(),
            block_ends: self.blocks.iter().map(|b| b.end).collect(),
        })
        .expect("schedule dump serializes")
    }
}

/// Ascending step sizes `[1, 2, ..., 2^(S-2), 2^(S-1) + 1]` for `L = 2^S`.
fn ass_sizes(gen_len: usize) -> Result<Vec<usize>> {
    let s_total = log2_exact(gen_len)
        .filter(|&s| s >= 1)
        .ok_or_else(|| {
            Error::config(format!(
                "ascending step sizes need a power-of-two gen_len >= 2, got {gen_len}"
            ))
        })?;
    let mut sizes: Vec<usize> = (0..s_total).map(|s| 1usize << s).collect();
    *sizes.last_mut().unwrap() += 1;
    Ok(sizes)
}

/// Uniform EOS attenuation: linear from `gamma_min` at `s = 0` to
/// `gamma_max` at `s = S - 1`; `gamma_max` when `S = 1`.
fn uniform_gamma(e: &EoserConfig, s: usize, steps: usize) -> f64 {
    if steps == 1 {
        return e.gamma_max;
    }
    e.gamma_min + (e.gamma_max - e.gamma_min) * s as f64 / (steps - 1) as f64
}

/// Ascending-step attenuation: weight `2^s / 2^S`, `(2^s + 1) / 2^S` at the
/// final step.
fn ass_gamma(e: &EoserConfig, s: usize, steps: usize) -> f64 {
    let weight = |s: usize| {
        let num = (1u64 << s) as f64 + if s + 1 == steps { 1.0 } else { 0.0 };
        num / (1u64 << steps) as f64
    };
    let mut w = weight(s);
    if e.renormalize_ass {
        w /= weight(steps - 1);
    }
    e.gamma_min + (e.gamma_max - e.gamma_min) * w
}

// One block spanning the response is a real value here, not a typo for a range.
#[allow(clippy::single_range_in_vec_init)]
pub fn build_schedule(cfg: &DecodeConfig) -> Result<DecodeSchedule> {
    let (l, steps) = (cfg.gen_len, cfg.steps);
    if l == 0 {
        return Err(Error::config("gen_len must be >= 1"));
    }
    if steps == 0 {
        return Err(Error::config("steps must be >= 1"));
    }
    if !(cfg.temperature >= 0.0 && cfg.temperature.is_finite()) {
        return Err(Error::config("temperature must be finite and >= 0"));
    }
    let eoser = cfg.effective_eoser();
    if let Some(e) = &eoser {
        e.validate()?;
    }
    let (sizes, block_of_step, blocks) = match cfg.scheduler {
        Scheduler::Uniform => {
            if l % steps != 0 {
                return Err(Error::config(format!(
                    "uniform scheduler needs steps ({steps}) to divide gen_len ({l})"
                )));
            }
            match cfg.mode {
                DecodeMode::FullDiffusion => (vec![l / steps; steps], vec![0; steps], vec![0..l]),
                DecodeMode::SemiAr { block_len } => {
                    if block_len == 0 || l % block_len != 0 {
                        return Err(Error::config(format!(
                            "block_len ({block_len}) must divide gen_len ({l})"
                        )));
                    }
                    let n_blocks = l / block_len;
                    if steps % n_blocks != 0 {
                        return Err(Error::config(format!(
                            "{steps} steps cannot be split evenly over {n_blocks} blocks"
                        )));
                    }
                    let per_block = steps / n_blocks;
                    if block_len % per_block != 0 {
                        return Err(Error::config(format!(
                            "{per_block} steps per block do not divide block_len {block_len}"
                        )));
                    }
                    let blocks = (0..n_blocks)
                        .map(|b| b * block_len..(b + 1) * block_len)
                        .collect();
                    (
                        vec![block_len / per_block; steps],
                        (0..steps).map(|s| s / per_block).collect(),
                        blocks,
                    )
                }
            }
        }
        Scheduler::Ass => {
            if matches!(cfg.mode, DecodeMode::SemiAr { .. }) {
                return Err(Error::config(
                    "ascending step sizes in semi-AR mode use the block_ass scheduler",
                ));
            }
            let sizes = ass_sizes(l)?;
            check_ass_steps(&sizes, steps)?;
            (sizes, vec![0; steps], vec![0..l])
        }
        Scheduler::BlockAss { steps_per_block } => {
            if steps_per_block == 0 {
                return Err(Error::config("steps_per_block must be >= 1"));
            }
            let sizes = ass_sizes(l)?;
            check_ass_steps(&sizes, steps)?;
            let block_of_step: Vec<usize> = (0..steps).map(|s| s / steps_per_block).collect();
            let blocks = match cfg.mode {
                DecodeMode::FullDiffusion => vec![0..l; block_of_step[steps - 1] + 1],
                DecodeMode::SemiAr { .. } => {
                    let mut blocks = Vec::new();
                    let mut start = 0;
                    for group in sizes.chunks(steps_per_block) {
                        let len: usize = group.iter().sum();
                        blocks.push(start..start + len);
                        start += len;
                    }
                    blocks
                }
            };
            (sizes, block_of_step, blocks)
        }
    };
    let gammas = match eoser {
        None => vec![1.0; steps],
        Some(e) => (0..steps)
            .map(|s| match cfg.scheduler {
                Scheduler::Uniform => uniform_gamma(&e, s, steps),
                Scheduler::Ass | Scheduler::BlockAss { .. } => ass_gamma(&e, s, steps),
            })
            .collect(),
    };
    debug_assert_eq!(sizes.iter().sum::<usize>(), l);
    Ok(DecodeSchedule {
        sizes,
        gammas,
        block_of_step,
        blocks,
    })
}

fn check_ass_steps(sizes: &[usize], steps: usize) -> Result<()> {
    if sizes.len() != steps {
        return Err(Error::config(format!(
            "ascending step sizes need steps = log2(gen_len) = {}, got {steps}",
            sizes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ass_128() {
        let s = build_schedule(&DecodeConfig::ass(128)).unwrap();
        assert_eq!(s.sizes, vec![1, 2, 4, 8, 16, 32, 65]);
        assert_eq!(s.steps(), 7);
        assert_eq!(s.gen_len(), 128);
        assert_eq!(s.gammas, vec![1.0; 7]);
    }

    #[test]
    fn uniform_gammas() {
        let cfg = DecodeConfig::uniform(16, 4).with_eoser(EoserConfig::uniform_default());
        let s = build_schedule(&cfg).unwrap();
        assert_eq!(s.sizes, vec![4; 4]);
        let want = [0.4, 0.6, 0.8, 1.0];
        for (g, w) in s.gammas.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_uniform_gamma_is_max() {
        let cfg = DecodeConfig::uniform(8, 1).with_eoser(EoserConfig::uniform_default());
        assert_eq!(build_schedule(&cfg).unwrap().gammas, vec![1.0]);
    }

    #[test]
    fn ass_gammas_worked_example() {
        let cfg = DecodeConfig::ass(16).with_eoser(EoserConfig::ass_default());
        let s = build_schedule(&cfg).unwrap();
        let want = [0.071875, 0.13375, 0.2575, 0.566875];
        for (g, w) in s.gammas.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn renormalized_ass_reaches_gamma_max() {
        let mut e = EoserConfig::ass_default();
        e.renormalize_ass = true;
        let s = build_schedule(&DecodeConfig::ass(64).with_eoser(e)).unwrap();
        assert!((s.gammas.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(s.gammas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn block_ass_first_block_is_31() {
        let mut cfg = DecodeConfig::ass(1024);
        cfg.scheduler = Scheduler::BlockAss { steps_per_block: 5 };
        cfg.mode = DecodeMode::SemiAr { block_len: 0 };
        let s = build_schedule(&cfg).unwrap();
        assert_eq!(s.blocks[0], 0..31);
        assert_eq!(s.blocks[1].len(), 32 * 31 + 1);
        assert_eq!(s.block_of_step, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(s.blocks.last().unwrap().end, 1024);
    }

    #[test]
    fn semi_ar_budget() {
        let s = build_schedule(&DecodeConfig::semi_ar(256, 64, 128)).unwrap();
        assert_eq!(s.blocks.len(), 2);
        assert_eq!(s.sizes, vec![4; 64]);
        assert_eq!(s.block_of_step[31], 0);
        assert_eq!(s.block_of_step[32], 1);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            DecodeConfig::uniform(16, 3),
            DecodeConfig::ass(12),
            DecodeConfig {
                steps: 5,
                ..DecodeConfig::ass(16)
            },
            DecodeConfig::semi_ar(16, 4, 3),
            DecodeConfig::semi_ar(16, 3, 8),
            DecodeConfig::uniform(16, 0),
            DecodeConfig::uniform(8, 2).with_eoser(EoserConfig {
                gamma_min: 0.8,
                gamma_max: 0.5,
                renormalize_ass: false,
            }),
        ];
        for cfg in bad {
            assert!(
                matches!(build_schedule(&cfg), Err(Error::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn eoser_ignored_in_semi_ar_unless_flagged() {
        let mut cfg = DecodeConfig::semi_ar(16, 8, 8).with_eoser(EoserConfig::uniform_default());
        assert_eq!(build_schedule(&cfg).unwrap().gammas, vec![1.0; 8]);
        cfg.eoser_in_semi_ar = true;
        assert!((build_schedule(&cfg).unwrap().gammas[0] - 0.4).abs() < 1e-12);
    }
}
