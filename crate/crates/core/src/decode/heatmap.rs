use std::fmt::Write;
use std::ops::Range;

use super::rollout::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::seqcore::TokenId;

/// Step-by-position EOS decode frequencies over many rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub steps: usize,
    pub gen_len: usize,
    pub records: usize,
    /// `steps x gen_len`, row-major.
    pub eos_freq: Vec<f64>,
    /// Mean probability of the tokens decoded at each step.
    pub mean_conf: Vec<f64>,
}

impl Heatmap {
    pub fn eos_freq(&self, step: usize, position: usize) -> f64 {
        self.eos_freq[step * self.gen_len + position]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,position,eos_freq,mean_conf\n");
        for s in 0..self.steps {
            for p in 0..self.gen_len {
                writeln!(out, "{s},{p},{},{}", self.eos_freq(s, p), self.mean_conf[s]).unwrap();
            }
        }
        out
    }
}

pub fn heatmap_accumulate(records: &[TrajectoryRecord], eos_id: TokenId) -> Result<Heatmap> {
    let first = records
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no trajectories to accumulate".into()))?;
    let (steps, gen_len) = (first.steps.len(), first.gen_len());
    let mut counts = vec![0u64; steps * gen_len];
    let mut conf_sum = vec![0.0; steps];
    let mut conf_n = vec![0u64; steps];
    for r in records {
        if r.steps.len() != steps || r.gen_len() != gen_len {
            return Err(Error::ShapeMismatch(format!(
                "trajectory with {} steps x {} positions, expected {steps} x {gen_len}",
                r.steps.len(),
                r.gen_len()
            )));
        }
        for (s, p, t, q) in r.decoded() {
            if t == eos_id {
                counts[s * gen_len + p] += 1;
            }
            conf_sum[s] += q;
            conf_n[s] += 1;
        }
    }
    let n = records.len() as f64;
    Ok(Heatmap {
        steps,
        gen_len,
        records: records.len(),
        eos_freq: counts.iter().map(|&c| c as f64 / n).collect(),
        mean_conf: conf_sum
            .iter()
            .zip(&conf_n)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect(),
    })
}

/// Earliest step at which any EOS was decoded.
pub fn first_eos_step(record: &TrajectoryRecord, eos_id: TokenId) -> Option<usize> {
    record
        .steps
        .iter()
        .position(|r| r.tokens.contains(&eos_id))
}

/// Number of EOS tokens decoded during `steps`.
pub fn eos_in_steps(record: &TrajectoryRecord, eos_id: TokenId, steps: Range<usize>) -> usize {
    record.steps[steps.start.min(record.steps.len())..steps.end.min(record.steps.len())]
        .iter()
        .map(|r| r.tokens.iter().filter(|&&t| t == eos_id).count())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::rollout::StepRecord;
    use crate::seqcore::{SequenceState, Vocab};

    /// Decodes one position per step in order, with EOS at `(eos_step, eos_step)`.
    fn record(l: usize, eos_step: Option<usize>) -> TrajectoryRecord {
        let v = Vocab::toy();
        let mut state = SequenceState::new(&[], l, &v).unwrap();
        let mut steps = Vec::new();
        for s in 0..l {
            let tok = if Some(s) == eos_step { v.eos_id() } else { 5 };
            let next = state.unmask(&[s], &[tok]).unwrap();
            steps.push(StepRecord {
                before: state,
                positions: vec![s],
                tokens: vec![tok],
                old_probs: vec![0.5],
                gamma: 1.0,
            });
            state = next;
        }
        TrajectoryRecord {
            steps,
            final_state: state,
        }
    }

    #[test]
    fn single_eos_cell() {
        let eos = Vocab::toy().eos_id();
        let h = heatmap_accumulate(&[record(8, Some(7))], eos).unwrap();
        for s in 0..8 {
            for p in 0..8 {
                let want = if (s, p) == (7, 7) { 1.0 } else { 0.0 };
                assert_eq!(h.eos_freq(s, p), want);
            }
        }
        assert_eq!(h.mean_conf, vec![0.5; 8]);
    }

    #[test]
    fn frequencies_bounded() {
        let eos = Vocab::toy().eos_id();
        let recs: Vec<_> = (0..6).map(|i| record(6, Some(i % 3))).collect();
        let h = heatmap_accumulate(&recs, eos).unwrap();
        assert!(h.eos_freq.iter().all(|&f| (0.0..=1.0).contains(&f)));
        assert!((h.eos_freq(0, 0) - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_shapes_rejected() {
        let eos = Vocab::toy().eos_id();
        assert!(matches!(
            heatmap_accumulate(&[record(4, None), record(6, None)], eos),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(heatmap_accumulate(&[], eos).is_err());
    }

    #[test]
    fn csv_layout() {
        let eos = Vocab::toy().eos_id();
        let csv = heatmap_accumulate(&[record(2, Some(1))], eos).unwrap().to_csv();
        assert_eq!(
            csv,
            "step,position,eos_freq,mean_conf\n0,0,0,0.5\n0,1,0,0.5\n1,0,0,0.5\n1,1,1,0.5\n"
        );
    }

    #[test]
    fn eos_step_queries() {
        let eos = Vocab::toy().eos_id();
        let r = record(8, Some(3));
        assert_eq!(first_eos_step(&r, eos), Some(3));
        assert_eq!(first_eos_step(&record(8, None), eos), None);
        assert_eq!(eos_in_steps(&r, eos, 0..2), 0);
        assert_eq!(eos_in_steps(&r, eos, 2..4), 1);
    }
}
