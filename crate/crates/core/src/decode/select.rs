use std::cmp::Ordering;
use std::ops::Range;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::predictor::PredictorOutput;
use crate::seqcore::{open01, SequenceState, TokenId};

/// Proposed token for one masked response position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub position: usize,
    pub token: TokenId,
    /// Noiseless probability of `token` at `position`.
    pub confidence: f64,
}

/// Index of the largest value, lowest index on ties, skipping `exclude`.
fn argmax_excluding(values: impl Iterator<Item = f64>, exclude: usize) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if i != exclude && (best.0 == usize::MAX || v > best.1) {
            best = (i, v);
        }
    }
    best.0
}

/// One candidate per masked position, in position order.
///
/// With `temperature > 0` the candidate is drawn with the Gumbel-max trick on
/// `logit / temperature`; one Gumbel variate is drawn per vocabulary entry of
/// every masked position, in position then token order. The mask token is
/// never proposed.
pub fn candidate_confidences(
    output: &PredictorOutput,
    state: &SequenceState,
    temperature: f64,
    rng: &mut impl RngCore,
) -> Vec<Candidate> {
    let mask = state.mask_id() as usize;
    state
        .masked_positions()
        .map(|pos| {
            let probs = output.response_probs(pos);
            let token = if temperature > 0.0 {
                let logits = output.response_logits(pos);
                let noisy: Vec<f64> = logits
                    .iter()
                    .map(|&l| l / temperature - (-open01(rng).ln()).ln())
                    .collect();
                argmax_excluding(noisy.into_iter(), mask)
            } else {
                argmax_excluding(output.response_logits(pos).iter().copied(), mask)
            };
            Candidate {
                position: pos,
                token: token as TokenId,
                confidence: probs[token],
            }
        })
        .collect()
}

/// Selection scores: confidence, scaled by `gamma` where the candidate is EOS.
pub fn apply_eoser(candidates: &[Candidate], gamma: f64, eos_id: TokenId) -> Vec<f64> {
    candidates
        .iter()
        .map(|c| {
            if c.token == eos_id {
                c.confidence * gamma
            } else {
                c.confidence
            }
        })
        .collect()
}

/// Indices into `candidates` of the `k` in-region candidates with the highest
/// score, lower position first on ties. Returned in ascending position order.
pub fn select_positions(
    candidates: &[Candidate],
    scores: &[f64],
    k: usize,
    region: Range<usize>,
) -> Result<Vec<usize>> {
    if scores.len() != candidates.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} candidates",
            scores.len(),
            candidates.len()
        )));
    }
    let mut eligible: Vec<usize> = (0..candidates.len())
        .filter(|&i| region.contains(&candidates[i].position))
        .collect();
    if k > eligible.len() {
        return Err(Error::ScheduleOverrun {
            requested: k,
            available: eligible.len(),
        });
    }
    eligible.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => candidates[a].position.cmp(&candidates[b].position),
        o => o,
    });
    eligible.truncate(k);
    eligible.sort_by_key(|&i| candidates[i].position);
    Ok(eligible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{MaskPredictor, OraclePredictor};
    use crate::seqcore::{Purpose, RngStream, Vocab};

    fn cand(position: usize, token: TokenId, confidence: f64) -> Candidate {
        Candidate {
            position,
            token,
            confidence,
        }
    }

    fn three_token_state() -> (Vocab, SequenceState) {
        let v = Vocab::new(
            vec!["<M>".into(), "<E>".into(), "a".into(), "b".into()],
            0,
            1,
        )
        .unwrap();
        let s = SequenceState::new(&[], 1, &v).unwrap();
        (v, s)
    }

    #[test]
    fn greedy_argmax_and_confidence() {
        let (_, s) = three_token_state();
        let o = OraclePredictor::new(4, 0, vec![0.0, 0.1, 0.7, 0.2]).unwrap();
        let out = o.forward(&s).unwrap();
        let c = candidate_confidences(&out, &s, 0.0, &mut RngStream::new(0).stream(Purpose::Misc, 0, 0));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].token, 2);
        assert!((c[0].confidence - 0.7).abs() < 1e-12);
    }

    #[test]
    fn greedy_tie_prefers_lower_token() {
        let (_, s) = three_token_state();
        let o = OraclePredictor::new(4, 0, vec![0.0, 0.2, 0.4, 0.4]).unwrap();
        let out = o.forward(&s).unwrap();
        let c = candidate_confidences(&out, &s, 0.0, &mut RngStream::new(0).stream(Purpose::Misc, 0, 0));
        assert_eq!(c[0].token, 2);
    }

    #[test]
    fn mask_token_never_proposed() {
        let (_, s) = three_token_state();
        let o = OraclePredictor::new(4, 0, vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let out = o.forward(&s).unwrap();
        for tau in [0.0, 1.0] {
            let mut rng = RngStream::new(3).stream(Purpose::Misc, 0, 0);
            for _ in 0..50 {
                assert_ne!(candidate_confidences(&out, &s, tau, &mut rng)[0].token, 0);
            }
        }
    }

    #[test]
    fn gumbel_replay_is_deterministic() {
        let v = Vocab::toy();
        let s = SequenceState::new(&[], 8, &v).unwrap();
        let o = OraclePredictor::uniform(v.size(), v.mask_id());
        let out = o.forward(&s).unwrap();
        let run = || {
            let mut rng = RngStream::new(11).stream(Purpose::RolloutNoise, 0, 0);
            candidate_confidences(&out, &s, 1.0, &mut rng)
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().map(|c| c.token).collect::<std::collections::HashSet<_>>().len() > 1);
    }

    #[test]
    fn eoser_scaling() {
        let c = [cand(0, 1, 0.9), cand(1, 5, 0.5)];
        let s = apply_eoser(&c, 0.4, 1);
        assert!((s[0] - 0.36).abs() < 1e-15);
        assert_eq!(s[1], 0.5);
        assert_eq!(select_positions(&c, &s, 1, 0..2).unwrap(), vec![1]);
        let ident = apply_eoser(&c, 1.0, 1);
        assert_eq!(ident, vec![0.9, 0.5]);
        let no_eos = [cand(0, 3, 0.9), cand(1, 5, 0.5)];
        assert_eq!(apply_eoser(&no_eos, 0.01, 1), vec![0.9, 0.5]);
    }

    #[test]
    fn top_k_basic() {
        let c = [cand(0, 2, 0.2), cand(1, 2, 0.9), cand(2, 2, 0.5)];
        let s: Vec<f64> = c.iter().map(|c| c.confidence).collect();
        assert_eq!(select_positions(&c, &s, 2, 0..3).unwrap(), vec![1, 2]);
        assert_eq!(select_positions(&c, &s, 3, 0..3).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_positions(&c, &s, 1, 0..1).unwrap(), vec![0]);
    }

    #[test]
    fn ties_prefer_lower_position() {
        let c = [cand(3, 2, 0.5), cand(5, 2, 0.5), cand(7, 2, 0.5)];
        let s = vec![0.5; 3];
        assert_eq!(select_positions(&c, &s, 2, 0..8).unwrap(), vec![0, 1]);
    }

    #[test]
    fn overrun() {
        let c = [cand(0, 2, 0.2), cand(4, 2, 0.9)];
        let s = vec![0.2, 0.9];
        assert!(matches!(
            select_positions(&c, &s, 2, 0..4),
            Err(Error::ScheduleOverrun {
                requested: 2,
                available: 1
            })
        ));
    }

    /// Every size-`k` subset where no left-out element outranks a chosen one.
    fn brute_force(scores: &[f64], k: usize) -> Vec<Vec<usize>> {
        let n = scores.len();
        let outranks = |a: usize, b: usize| scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .filter(|m| {
                (0..n).all(|out| {
                    m >> out & 1 == 1 || (0..n).all(|inn| m >> inn & 1 == 0 || !outranks(out, inn))
                })
            })
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
            .collect()
    }

    #[test]
    fn matches_exhaustive_subset_search() {
        let mut rng = RngStream::new(5).stream(Purpose::Misc, 0, 0);
        for trial in 0..400 {
            let n = 1 + trial % 8;
            // Coarse values so ties occur often.
            let scores: Vec<f64> = (0..n).map(|_| (rng.next_u32() % 4) as f64 * 0.25).collect();
            let c: Vec<Candidate> = (0..n).map(|i| cand(i, 2, scores[i])).collect();
            for k in 0..=n {
                assert_eq!(
                    vec![select_positions(&c, &scores, k, 0..n).unwrap()],
                    brute_force(&scores, k),
                    "{scores:?} k={k}"
                );
            }
        }
    }
}
