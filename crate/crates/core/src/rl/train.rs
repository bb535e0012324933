use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{BaselineMode, RlConfig};
use super::loss::{PolicySnapshot, PreparedBatch, RatioStats, RolloutGroup};
use crate::decode::{build_schedule, rollout_scheduled, DecodeConfig};
use crate::error::{Error, Result};
use crate::optim::AdamWState;
use crate::predictor::{CountingPredictor, MaskPredictor, ModelParams};
use crate::seqcore::{Purpose, RngStream, Vocab};
use crate::tasks::TaskInstance;

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub outer_step: usize,
    /// Mean rollout reward of the batch, before the update.
    pub mean_reward: f64,
    /// Mean loss over the inner iterations.
    pub loss: f64,
    pub first_inner_loss: f64,
    pub kl: f64,
    /// Ratio statistics of the last inner iteration.
    pub ratio_stats: RatioStats,
    /// Predictor forward passes spent on this outer step.
    pub forward_passes: u64,
    pub wall_ms: u64,
}

/// Outer-loop state of a policy optimisation run.
#[derive(Debug, Clone)]
pub struct RlTrainer<'a> {
    cfg: RlConfig,
    vocab: &'a Vocab,
    questions: &'a [TaskInstance],
    rng: RngStream,
    pub params: ModelParams,
    /// Fixed reference policy for the KL term.
    pub reference: ModelParams,
    pub opt: AdamWState,
    /// Number of completed outer steps.
    pub outer_step: usize,
}

impl<'a> RlTrainer<'a> {
    /// Starts a run; the reference policy is `params` itself.
    pub fn new(
        cfg: RlConfig,
        vocab: &'a Vocab,
        questions: &'a [TaskInstance],
        params: ModelParams,
        rng: RngStream,
    ) -> Result<Self> {
        let reference = params.clone();
        let opt = AdamWState::new(params.len());
        Self::resume(cfg, vocab, questions, params, reference, opt, 0, rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn resume(
        cfg: RlConfig,
        vocab: &'a Vocab,
        questions: &'a [TaskInstance],
        params: ModelParams,
        reference: ModelParams,
        opt: AdamWState,
        outer_step: usize,
        rng: RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        if questions.is_empty() {
            return Err(Error::config("policy optimisation needs at least one question"));
        }
        if params.config() != reference.config() || opt.m.len() != params.len() {
            return Err(Error::ShapeMismatch("policy, reference and optimizer disagree".into()));
        }
        if params.config().vocab_size != vocab.size() {
            return Err(Error::ShapeMismatch("model and vocab sizes differ".into()));
        }
        Ok(Self {
            cfg,
            vocab,
            questions,
            rng,
            params,
            reference,
            opt,
            outer_step,
        })
    }

    pub fn config(&self) -> &RlConfig {
        &self.cfg
    }

    /// Question indices for outer step `t`, drawn with replacement.
    pub fn batch_indices(&self, t: usize) -> Vec<usize> {
        let mut r = self.rng.stream(Purpose::Questions, t as u64, 0);
        (0..self.cfg.batch_size)
            .map(|_| r.random_range(0..self.questions.len()))
            .collect()
    }

    /// `G` rollouts per question under the current policy, scored.
    pub fn collect(&self, t: usize) -> Result<Vec<RolloutGroup>> {
        self.collect_counted(t, &CountingPredictor::new(&self.params))
    }

    fn collect_counted(
        &self,
        t: usize,
        policy: &CountingPredictor<&ModelParams>,
    ) -> Result<Vec<RolloutGroup>> {
        let decode = self.cfg.rollout_decode();
        let schedule = build_schedule(&decode)?;
        let g = self.cfg.group_size;
        self.batch_indices(t)
            .into_iter()
            .enumerate()
            .map(|(b, qi)| {
                let q = &self.questions[qi];
                let prompt = self.vocab.encode(&q.prompt_text())?;
                let question_id = (t * self.cfg.batch_size + b) as u64;
                let mut records = Vec::with_capacity(g);
                let mut rewards = Vec::with_capacity(g);
                for m in 0..g {
                    let rec = rollout_scheduled(
                        policy,
                        &prompt,
                        &schedule,
                        decode.temperature,
                        self.vocab,
                        &self.rng,
                        question_id * g as u64 + m as u64,
                    )?;
                    let text = self.vocab.decode_until_eos(rec.final_state.response())?;
                    rewards.push(q.verify(&text).with_lambda(self.cfg.lambda_fmt).total);
                    records.push(rec);
                }
                RolloutGroup::new(question_id, records, rewards)
            })
            .collect()
    }

    /// One outer step: rollouts, advantages and `grpo_iters` updates.
    ///
    /// If the loss or the parameters stop being finite, the state is rolled
    /// back to before the failing update and [`Error::Diverged`] is returned.
    pub fn step(&mut self) -> Result<RunLogRecord> {
        let started = Instant::now();
        let t = self.outer_step;
        let policy = CountingPredictor::new(&self.params);
        let groups = self.collect_counted(t, &policy)?;
        let rollout_passes = policy.calls() as u64;
        let n_rollouts = (groups.len() * self.cfg.group_size) as f64;
        let mean_reward = groups.iter().flat_map(|g| &g.rewards).sum::<f64>() / n_rollouts;
        let old = self.params.clone();
        let prepared = PreparedBatch::new(
            &groups,
            PolicySnapshot {
                params_old: &old,
                params_ref: &self.reference,
            },
            self.cfg.baseline,
            &self.rng,
            self.vocab.mask_id(),
        )?;
        let mut losses = Vec::with_capacity(self.cfg.grpo_iters);
        let mut kl = 0.0;
        let mut ratio = RatioStats::default();
        for _ in 0..self.cfg.grpo_iters {
            let out = match prepared.loss(&self.params, &self.cfg) {
                Ok(out) if out.grads.iter().all(|g| g.is_finite()) => out,
                Ok(_) | Err(Error::NonFinite(_) | Error::NumericalOverflow { .. }) => {
                    return Err(Error::Diverged { step: t });
                }
                Err(e) => return Err(e),
            };
            let backup = (self.params.data.clone(), self.opt.clone());
            self.opt.update(&self.cfg.optimizer, &mut self.params.data, &out.grads);
            if !self.params.all_finite() {
                (self.params.data, self.opt) = backup;
                return Err(Error::Diverged { step: t });
            }
            self.params.round_to_f32();
            self.opt.round_to_f32();
            losses.push(out.loss);
            kl += out.kl / self.cfg.grpo_iters as f64;
            ratio = out.ratio;
        }
        self.outer_step += 1;
        let per_unit = match self.cfg.baseline {
            BaselineMode::Cj => 1,
            _ => 2,
        };
        let forward_passes = rollout_passes
            + (prepared.len() * (per_unit + self.cfg.grpo_iters)) as u64;
        Ok(RunLogRecord {
            outer_step: t,
            mean_reward,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            first_inner_loss: losses[0],
            kl,
            ratio_stats: ratio,
            forward_passes,
            wall_ms: if self.cfg.record_wall_clock {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        })
    }

    /// Runs until `cfg.outer_steps` outer steps are done, calling `on_step`
    /// after each.
    pub fn run(
        &mut self,
        mut on_step: impl FnMut(&RunLogRecord, &Self) -> Result<()>,
    ) -> Result<Vec<RunLogRecord>> {
        let mut log = Vec::new();
        while self.outer_step < self.cfg.outer_steps {
            let rec = self.step()?;
            on_step(&rec, self)?;
            log.push(rec);
        }
        Ok(log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub questions: usize,
    pub mean_reward: f64,
    pub accuracy: f64,
    pub format_rate: f64,
}

/// Decodes one completion per question and scores it. Question `i` uses
/// rollout index `i` of `rng`.
pub fn evaluate<P: MaskPredictor + ?Sized>(
    predictor: &P,
    questions: &[TaskInstance],
    decode: &DecodeConfig,
    vocab: &Vocab,
    rng: &RngStream,
    lambda_fmt: f64,
) -> Result<EvalSummary> {
    let schedule = build_schedule(decode)?;
    let (mut reward, mut correct, mut fmt) = (0.0, 0.0, 0.0);
    for (i, q) in questions.iter().enumerate() {
        let prompt = vocab.encode(&q.prompt_text())?;
        let rec = rollout_scheduled(predictor, &prompt, &schedule, decode.temperature, vocab, rng, i as u64)?;
        let text = vocab.decode_until_eos(rec.final_state.response())?;
        let r = q.verify(&text).with_lambda(lambda_fmt);
        reward += r.total;
        correct += r.correctness as f64;
        fmt += r.format_ok as f64;
    }
    let n = questions.len().max(1) as f64;
    Ok(EvalSummary {
        questions: questions.len(),
        mean_reward: reward / n,
        accuracy: correct / n,
        format_rate: fmt / n,
    })
}
