use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::{BaselineMode, RlConfig};
use crate::decode::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::predictor::{MaskPredictor, ModelParams};
use crate::seqcore::{open01, Purpose, RngStream, TokenId};

/// Probabilities are clamped to this before logs and ratios.
pub const PROB_FLOOR: f64 = 1e-12;

/// Rollouts for one question with their rewards and advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    /// Unique across the run; keys the prompt perturbation stream.
    pub question_id: u64,
    pub records: Vec<TrajectoryRecord>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(question_id: u64, records: Vec<TrajectoryRecord>, rewards: Vec<f64>) -> Result<Self> {
        if records.len() != rewards.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} records for {} rewards",
                records.len(),
                rewards.len()
            )));
        }
        let advantages = super::compute_advantages(&rewards)?;
        Ok(Self {
            question_id,
            records,
            rewards,
            advantages,
        })
    }
}

/// Frozen policies of one outer step.
#[derive(Debug, Clone, Copy)]
pub struct PolicySnapshot<'a> {
    /// Behavior policy that produced the rollouts.
    pub params_old: &'a ModelParams,
    pub params_ref: &'a ModelParams,
}

fn clamp_prob(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

/// Geometric mean of clamped probabilities.
pub fn geometric_mean(probs: &[f64]) -> f64 {
    if probs.is_empty() {
        return 1.0;
    }
    (probs.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / probs.len() as f64).exp()
}

fn gather(
    output_probs: impl Fn(usize) -> Vec<f64>,
    positions: &[usize],
    tokens: &[TokenId],
) -> Vec<f64> {
    positions
        .iter()
        .zip(tokens)
        .map(|(&p, &t)| output_probs(p)[t as usize])
        .collect()
}

/// Probability of the step-`s` decode of `record` under `predictor`: the
/// geometric mean of the chosen tokens' probabilities, recomputed on the
/// stored snapshot.
pub fn step_confidence<P: MaskPredictor + ?Sized>(
    predictor: &P,
    record: &TrajectoryRecord,
    s: usize,
) -> Result<f64> {
    let step = record.steps.get(s).ok_or_else(|| {
        Error::TrajectoryCorrupt(format!("step {s} of {}", record.steps.len()))
    })?;
    let l = step.before.gen_len();
    if step.positions.len() != step.tokens.len()
        || step.positions.iter().any(|&p| p >= l || !step.before.masked()[p])
    {
        return Err(Error::TrajectoryCorrupt(format!("step {s} positions do not fit its snapshot")));
    }
    let out = predictor.forward(&step.before)?;
    if out.rows() != step.before.prompt_len() + l {
        return Err(Error::TrajectoryCorrupt(format!("step {s} snapshot length")));
    }
    let probs = gather(|p| out.response_probs(p).to_vec(), &step.positions, &step.tokens);
    Ok(geometric_mean(&probs))
}

/// [`step_confidence`] for every member of a group.
pub fn step_confidences<P: MaskPredictor + ?Sized>(
    predictor: &P,
    records: &[TrajectoryRecord],
    s: usize,
) -> Result<Vec<f64>> {
    records.iter().map(|r| step_confidence(predictor, r, s)).collect()
}

/// Pointwise non-negative KL estimate `r - ln r - 1`, `r = p_ref / p`.
pub fn kl_estimate(p: f64, p_ref: f64) -> f64 {
    let r = clamp_prob(p_ref) / clamp_prob(p);
    r - r.ln() - 1.0
}

fn clip_ratio(ratio: f64, eps: f64) -> f64 {
    if eps > 0.0 {
        ratio.clamp(1.0 - eps, 1.0 + eps)
    } else {
        ratio
    }
}

/// Pessimistic surrogate `min(ratio A, clip(ratio) A)` and whether the
/// unclipped branch is the one in effect.
fn surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, bool) {
    let raw = ratio * adv;
    let clipped = clip_ratio(ratio, eps) * adv;
    if raw <= clipped {
        (raw, true)
    } else {
        (clipped, false)
    }
}

/// Loss between adjacent steps for one group:
/// `-(1/G) sum_g surrogate_g + beta * mean_g kl_g`.
///
/// `clip_eps = 0` gives the unclipped ratio.
pub fn cj_step_loss(
    p_new: &[f64],
    p_old: &[f64],
    advantages: &[f64],
    beta: f64,
    kl_terms: &[f64],
    clip_eps: f64,
) -> Result<f64> {
    let g = p_new.len();
    if g == 0 || p_old.len() != g || advantages.len() != g || kl_terms.len() != g {
        return Err(Error::ShapeMismatch(format!(
            "step loss inputs of lengths {}, {}, {}, {}",
            g,
            p_old.len(),
            advantages.len(),
            kl_terms.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..g {
        let ratio = clamp_prob(p_new[i]) / clamp_prob(p_old[i]);
        if !ratio.is_finite() {
            return Err(Error::NonFinite("importance ratio"));
        }
        total -= surrogate(ratio, advantages[i], clip_eps).0;
        total += beta * kl_terms[i];
    }
    Ok(total / g as f64)
}

/// One scored forward pass: an input sequence and the decoded tokens whose
/// probabilities it is scored on.
#[derive(Debug, Clone, PartialEq)]
struct ScoredStep {
    /// Loss weight `1 / (B S G)`.
    weight: f64,
    advantage: f64,
    tokens: Vec<TokenId>,
    prompt_len: usize,
    positions: Vec<usize>,
    chosen: Vec<TokenId>,
    old_prob: f64,
    ref_probs: Vec<f64>,
}

/// Ratio of new to behavior probability over every scored step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatioStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of scored steps where the clipped branch was in effect.
    pub clip_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlLoss {
    pub loss: f64,
    /// Mean per-token KL estimate over scored steps.
    pub kl: f64,
    pub ratio: RatioStats,
    pub grads: Vec<f64>,
}

/// A batch of groups turned into scored steps, with behavior and reference
/// probabilities resolved once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBatch {
    units: Vec<ScoredStep>,
    /// `units` index range of each group.
    groups: Vec<std::ops::Range<usize>>,
}

fn response_probs_of(
    params: &ModelParams,
    tokens: &[TokenId],
    prompt_len: usize,
    positions: &[usize],
    chosen: &[TokenId],
) -> Result<Vec<f64>> {
    let v = params.config().vocab_size;
    let cache = params.forward_cached(tokens)?;
    Ok(positions
        .iter()
        .zip(chosen)
        .map(|(&p, &t)| cache.probs[(prompt_len + p) * v + t as usize])
        .collect())
}

impl PreparedBatch {
    pub fn new(
        batch: &[RolloutGroup],
        snapshot: PolicySnapshot<'_>,
        mode: BaselineMode,
        rng: &RngStream,
        mask_id: TokenId,
    ) -> Result<Self> {
        let b = batch.len();
        let mut units = Vec::new();
        let mut groups = Vec::with_capacity(b);
        for group in batch {
            let start = units.len();
            let g = group.records.len();
            if group.advantages.len() != g {
                return Err(Error::ShapeMismatch("advantages per record".into()));
            }
            let steps = group.records.first().map_or(0, |r| r.steps.len());
            for (gi, (record, &adv)) in group.records.iter().zip(&group.advantages).enumerate() {
                record.validate()?;
                if record.steps.len() != steps {
                    return Err(Error::ShapeMismatch(format!(
                        "group {} mixes {} and {} steps",
                        group.question_id,
                        steps,
                        record.steps.len()
                    )));
                }
                match mode {
                    BaselineMode::Cj => {
                        let weight = 1.0 / (b * steps * g) as f64;
                        for step in &record.steps {
                            let tokens = step.before.full_tokens();
                            let prompt_len = step.before.prompt_len();
                            let ref_probs = response_probs_of(
                                snapshot.params_ref,
                                &tokens,
                                prompt_len,
                                &step.positions,
                                &step.tokens,
                            )?;
                            units.push(ScoredStep {
                                weight,
                                advantage: adv,
                                tokens,
                                prompt_len,
                                positions: step.positions.clone(),
                                chosen: step.tokens.clone(),
                                old_prob: geometric_mean(&step.old_probs),
                                ref_probs,
                            });
                        }
                    }
                    BaselineMode::IcjPromptPerturb { .. } | BaselineMode::IcjOneStep => {
                        let fin = &record.final_state;
                        let prompt: Vec<TokenId> = match mode {
                            BaselineMode::IcjPromptPerturb { p_mask } => {
                                let mut r = rng.stream(
                                    Purpose::PromptPerturb,
                                    group.question_id,
                                    gi as u64,
                                );
                                perturb_prompt(fin.prompt(), p_mask, mask_id, &mut r)
                            }
                            _ => fin.prompt().to_vec(),
                        };
                        let mut tokens = prompt;
                        match mode {
                            BaselineMode::IcjOneStep => {
                                tokens.extend(std::iter::repeat_n(mask_id, fin.gen_len()))
                            }
                            _ => tokens.extend_from_slice(fin.response()),
                        }
                        let prompt_len = fin.prompt_len();
                        let positions: Vec<usize> = (0..fin.gen_len()).collect();
                        let chosen = fin.response().to_vec();
                        let old = response_probs_of(
                            snapshot.params_old,
                            &tokens,
                            prompt_len,
                            &positions,
                            &chosen,
                        )?;
                        let ref_probs = response_probs_of(
                            snapshot.params_ref,
                            &tokens,
                            prompt_len,
                            &positions,
                            &chosen,
                        )?;
                        units.push(ScoredStep {
                            weight: 1.0 / (b * g) as f64,
                            advantage: adv,
                            tokens,
                            prompt_len,
                            positions,
                            chosen,
                            old_prob: geometric_mean(&old),
                            ref_probs,
                        });
                    }
                }
            }
            groups.push(start..units.len());
        }
        Ok(Self { units, groups })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Loss and gradient under `params`. Groups are processed in
    /// `grad_accum` consecutive chunks whose gradients are summed.
    pub fn loss(&self, params: &ModelParams, cfg: &RlConfig) -> Result<RlLoss> {
        let v = params.config().vocab_size;
        let mut grads = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut kl_sum = 0.0;
        let mut ratio = RatioStats {
            mean: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            clip_frac: 0.0,
        };
        let n = self.units.len().max(1) as f64;
        let chunk = self.groups.len().div_ceil(cfg.grad_accum.max(1)).max(1);
        for groups in self.groups.chunks(chunk) {
            let mut micro = vec![0.0; params.len()];
            for range in groups {
                for u in &self.units[range.clone()] {
                    let cache = params.forward_cached(&u.tokens)?;
                    let k = u.positions.len() as f64;
                    let probs: Vec<f64> = u
                        .positions
                        .iter()
                        .zip(&u.chosen)
                        .map(|(&p, &t)| cache.probs[(u.prompt_len + p) * v + t as usize])
                        .collect();
                    let p_new = geometric_mean(&probs);
                    let r = p_new / clamp_prob(u.old_prob);
                    if !r.is_finite() {
                        return Err(Error::NonFinite("importance ratio"));
                    }
                    let (surr, active) = surrogate(r, u.advantage, cfg.clip_eps);
                    let kl: f64 = probs
                        .iter()
                        .zip(&u.ref_probs)
                        .map(|(&p, &q)| kl_estimate(p, q))
                        .sum::<f64>()
                        / k;
                    loss += u.weight * (-surr + cfg.kl_coeff * kl);
                    kl_sum += kl;
                    ratio.mean += r / n;
                    ratio.min = ratio.min.min(r);
                    ratio.max = ratio.max.max(r);
                    if !active {
                        ratio.clip_frac += 1.0 / n;
                    }
                    // Coefficient on d ln p_i for each chosen token.
                    let pg = if active { -u.advantage * r / k } else { 0.0 };
                    let mut dlogits = vec![0.0; u.tokens.len() * v];
                    for (i, (&p, &t)) in u.positions.iter().zip(&u.chosen).enumerate() {
                        if probs[i] < PROB_FLOOR {
                            continue;
                        }
                        let rr = clamp_prob(u.ref_probs[i]) / probs[i];
                        let c = u.weight * (pg + cfg.kl_coeff * (1.0 - rr) / k);
                        let row = (u.prompt_len + p) * v;
                        let d = &mut dlogits[row..row + v];
                        for (dx, &q) in d.iter_mut().zip(&cache.probs[row..row + v]) {
                            *dx = -c * q;
                        }
                        d[t as usize] += c;
                    }
                    params.backward(&cache, &dlogits, &mut micro);
                }
            }
            for (g, m) in grads.iter_mut().zip(&micro) {
                *g += m;
            }
        }
        if self.units.is_empty() {
            ratio = RatioStats::default();
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok(RlLoss {
            loss,
            kl: kl_sum / n,
            ratio,
            grads,
        })
    }
}

/// Replaces each prompt token by the mask token with probability `p_mask`.
pub fn perturb_prompt(
    prompt: &[TokenId],
    p_mask: f64,
    mask_id: TokenId,
    rng: &mut impl RngCore,
) -> Vec<TokenId> {
    prompt
        .iter()
        .map(|&t| if open01(rng) < p_mask { mask_id } else { t })
        .collect()
}

/// Trajectory-consistent loss: every stored step of every rollout is
/// replayed on its own snapshot, `(1/B) sum_b (1/S) sum_s step_loss`.
pub fn trajectory_loss(
    params: &ModelParams,
    batch: &[RolloutGroup],
    snapshot: PolicySnapshot<'_>,
    cfg: &RlConfig,
    mask_id: TokenId,
) -> Result<RlLoss> {
    PreparedBatch::new(batch, snapshot, BaselineMode::Cj, &RngStream::new(0), mask_id)?
        .loss(params, cfg)
}

/// One-step baselines: the completion is scored in a single forward pass,
/// either from a prompt-perturbed final state or from the fully masked
/// response.
pub fn icj_losses(
    params: &ModelParams,
    batch: &[RolloutGroup],
    snapshot: PolicySnapshot<'_>,
    cfg: &RlConfig,
    rng: &RngStream,
    mask_id: TokenId,
) -> Result<RlLoss> {
    if cfg.baseline == BaselineMode::Cj {
        return Err(Error::config("icj_losses needs a one-step baseline mode"));
    }
    PreparedBatch::new(batch, snapshot, cfg.baseline, rng, mask_id)?.loss(params, cfg)
}
