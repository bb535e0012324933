use super::config::DecodeConfig;
use super::schedule::{build_schedule, DecodeSchedule};
use super::select::{apply_eoser, candidate_confidences, select_positions};
use crate::error::{Error, Result};
use crate::predictor::MaskPredictor;
use crate::seqcore::{Purpose, RngStream, SequenceState, TokenId, Vocab};

/// One denoising step as it happened.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// State before the step.
    pub before: SequenceState,
    /// Response positions decoded at this step, ascending.
    pub positions: Vec<usize>,
    pub tokens: Vec<TokenId>,
    /// Behavior-policy probabilities of `tokens` at `positions`.
    pub old_probs: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    pub final_state: SequenceState,
}

impl TrajectoryRecord {
    pub fn gen_len(&self) -> usize {
        self.final_state.gen_len()
    }

    pub fn prompt(&self) -> &[TokenId] {
        self.final_state.prompt()
    }

    /// `(step, position, token, old_prob)` for every decoded token.
    pub fn decoded(&self) -> impl Iterator<Item = (usize, usize, TokenId, f64)> + '_ {
        self.steps.iter().enumerate().flat_map(|(s, r)| {
            r.positions
                .iter()
                .zip(&r.tokens)
                .zip(&r.old_probs)
                .map(move |((&p, &t), &q)| (s, p, t, q))
        })
    }

    /// Checks that the recorded steps decode every position exactly once and
    /// that each snapshot follows from the previous one.
    pub fn validate(&self) -> Result<()> {
        let l = self.gen_len();
        let mut seen = vec![false; l];
        for (s, r) in self.steps.iter().enumerate() {
            if r.before.step() != s || r.before.gen_len() != l {
                return Err(Error::TrajectoryCorrupt(format!("snapshot {s} out of place")));
            }
            if r.positions.len() != r.tokens.len() || r.positions.len() != r.old_probs.len() {
                return Err(Error::TrajectoryCorrupt(format!("step {s} has ragged arrays")));
            }
            for &p in &r.positions {
                if p >= l || seen[p] || !r.before.masked()[p] {
                    return Err(Error::TrajectoryCorrupt(format!(
                        "position {p} decoded twice or out of range at step {s}"
                    )));
                }
                seen[p] = true;
            }
            let next = match self.steps.get(s + 1) {
                Some(n) => &n.before,
                None => &self.final_state,
            };
            let replay = r.before.unmask(&r.positions, &r.tokens)?;
            if replay.response() != next.response() || replay.masked() != next.masked() {
                return Err(Error::TrajectoryCorrupt(format!(
                    "step {s} does not lead to the next snapshot"
                )));
            }
        }
        if seen.iter().any(|&d| !d) {
            return Err(Error::TrajectoryCorrupt("positions left undecoded".into()));
        }
        Ok(())
    }
}

/// Generates a response for `prompt`, recording every intermediate state.
///
/// Gumbel noise for step `s` comes from stream
/// `(RolloutNoise, rollout_index, s)` of `rng`.
pub fn rollout<P: MaskPredictor + ?Sized>(
    predictor: &P,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
    vocab: &Vocab,
    rng: &RngStream,
    rollout_index: u64,
) -> Result<TrajectoryRecord> {
    let schedule = build_schedule(cfg)?;
    rollout_scheduled(predictor, prompt, &schedule, cfg.temperature, vocab, rng, rollout_index)
}

/// [`rollout`] with a prebuilt schedule.
pub fn rollout_scheduled<P: MaskPredictor + ?Sized>(
    predictor: &P,
    prompt: &[TokenId],
    schedule: &DecodeSchedule,
    temperature: f64,
    vocab: &Vocab,
    rng: &RngStream,
    rollout_index: u64,
) -> Result<TrajectoryRecord> {
    if predictor.vocab_size() != vocab.size() {
        return Err(Error::ShapeMismatch(format!(
            "predictor vocab {} vs vocab {}",
            predictor.vocab_size(),
            vocab.size()
        )));
    }
    let mut state = SequenceState::new(prompt, schedule.gen_len(), vocab)?;
    let mut steps = Vec::with_capacity(schedule.steps());
    for s in 0..schedule.steps() {
        let output = predictor.forward(&state)?;
        let mut noise = rng.stream(Purpose::RolloutNoise, rollout_index, s as u64);
        let candidates = candidate_confidences(&output, &state, temperature, &mut noise);
        let scores = apply_eoser(&candidates, schedule.gammas[s], vocab.eos_id());
        let chosen = select_positions(&candidates, &scores, schedule.sizes[s], schedule.region(s))?;
        let positions: Vec<usize> = chosen.iter().map(|&i| candidates[i].position).collect();
        let tokens: Vec<TokenId> = chosen.iter().map(|&i| candidates[i].token).collect();
        let old_probs = chosen.iter().map(|&i| candidates[i].confidence).collect();
        let next = state.unmask(&positions, &tokens)?;
        steps.push(StepRecord {
            before: state,
            positions,
            tokens,
            old_probs,
            gamma: schedule.gammas[s],
        });
        state = next;
    }
    Ok(TrajectoryRecord {
        steps,
        final_state: state,
    })
}
