use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CountdownDifficulty, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::predictor::Sample;
use crate::seqcore::{Purpose, RngStream, TokenId, Vocab};

/// Relative sampling weights of the tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMix {
    pub countdown: f64,
    pub sudoku: f64,
    #[serde(default)]
    pub difficulty: CountdownDifficulty,
}

impl Default for TaskMix {
    fn default() -> Self {
        Self {
            countdown: 0.5,
            sudoku: 0.5,
            difficulty: CountdownDifficulty::default(),
        }
    }
}

impl TaskMix {
    pub fn countdown_only(difficulty: CountdownDifficulty) -> Self {
        Self {
            countdown: 1.0,
            sudoku: 0.0,
            difficulty,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.countdown) || !ok(self.sudoku) || self.countdown + self.sudoku <= 0.0 {
            return Err(Error::config("task weights must be non-negative with a positive sum"));
        }
        Ok(())
    }

    /// Task and instance for draw `index`, from stream `(purpose, index, 0)`.
    pub fn draw(&self, rng: &RngStream, purpose: Purpose, index: u64) -> TaskInstance {
        let mut r = rng.stream(purpose, index, 0);
        let u: f64 = r.random();
        let kind = if u * (self.countdown + self.sudoku) < self.countdown {
            TaskKind::Countdown
        } else {
            TaskKind::Sudoku
        };
        TaskInstance::generate(kind, self.difficulty, &mut r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub instance: TaskInstance,
    pub prompt: Vec<TokenId>,
    /// Tagged reference answer right-padded with EOS to the response length.
    pub response: Vec<TokenId>,
}

impl CorpusSample {
    /// Prompt and response as one unconditioned sequence.
    pub fn full(&self) -> Vec<TokenId> {
        let mut v = self.prompt.clone();
        v.extend_from_slice(&self.response);
        v
    }

    pub fn as_sample(&self) -> Sample {
        Sample {
            prompt: self.prompt.clone(),
            response: self.response.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub gen_len: usize,
    pub samples: Vec<CorpusSample>,
    /// Draws whose answer did not fit in `gen_len`.
    pub skipped: usize,
}

impl Corpus {
    /// Fraction of response tokens that are EOS.
    pub fn eos_fraction(&self, eos_id: TokenId) -> f64 {
        let total = self.samples.len() * self.gen_len;
        if total == 0 {
            return 0.0;
        }
        let eos: usize = self
            .samples
            .iter()
            .map(|s| s.response.iter().filter(|&&t| t == eos_id).count())
            .sum();
        eos as f64 / total as f64
    }
}

/// Right-pads an encoded completion with EOS to exactly `gen_len` tokens.
pub fn pad_response(mut tokens: Vec<TokenId>, gen_len: usize, eos_id: TokenId) -> Option<Vec<TokenId>> {
    if tokens.len() > gen_len {
        return None;
    }
    tokens.resize(gen_len, eos_id);
    Some(tokens)
}

/// `n` draws from `mix`, draw `i` seeded by stream `(Corpus, i, 0)`.
/// Draws whose tagged answer is longer than `gen_len` are skipped and counted.
pub fn build_corpus(
    mix: &TaskMix,
    n: usize,
    gen_len: usize,
    vocab: &Vocab,
    rng: &RngStream,
) -> Result<Corpus> {
    mix.validate()?;
    if gen_len == 0 {
        return Err(Error::config("gen_len must be >= 1"));
    }
    let mut samples = Vec::with_capacity(n);
    let mut skipped = 0;
    for i in 0..n {
        let instance = mix.draw(rng, Purpose::Corpus, i as u64);
        let prompt = vocab.encode(&instance.prompt_text())?;
        let answer = vocab.encode(&instance.reference_completion())?;
        match pad_response(answer, gen_len, vocab.eos_id()) {
            Some(response) => samples.push(CorpusSample {
                instance,
                prompt,
                response,
            }),
            None => skipped += 1,
        }
    }
    Ok(Corpus {
        gen_len,
        samples,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_arithmetic() {
        let p = pad_response(vec![5; 10], 32, 1).unwrap();
        assert_eq!(p.len(), 32);
        assert_eq!(p.iter().filter(|&&t| t == 1).count(), 22);
        assert_eq!(pad_response(vec![5; 32], 32, 1).unwrap(), vec![5; 32]);
        assert!(pad_response(vec![5; 33], 32, 1).is_none());
    }

    #[test]
    fn default_mix_eos_mass() {
        let v = Vocab::toy();
        let c = build_corpus(&TaskMix::default(), 400, 64, &v, &RngStream::new(1)).unwrap();
        assert_eq!(c.skipped, 0);
        assert!(c.eos_fraction(v.eos_id()) > 0.3);
        let kinds: std::collections::HashSet<_> = c.samples.iter().map(|s| s.instance.kind()).collect();
        assert_eq!(kinds.len(), 2);
        for s in &c.samples {
            let text = v.decode_until_eos(&s.response).unwrap();
            assert_eq!(s.instance.verify(&text).total, 1.1);
        }
    }

    #[test]
    fn overlong_skipped() {
        let v = Vocab::toy();
        let mix = TaskMix {
            countdown: 0.0,
            sudoku: 1.0,
            ..TaskMix::default()
        };
        let c = build_corpus(&mix, 10, 32, &v, &RngStream::new(1)).unwrap();
        assert_eq!((c.samples.len(), c.skipped), (0, 10));
    }

    #[test]
    fn deterministic() {
        let v = Vocab::toy();
        let a = build_corpus(&TaskMix::default(), 20, 64, &v, &RngStream::new(3)).unwrap();
        let b = build_corpus(&TaskMix::default(), 20, 64, &v, &RngStream::new(3)).unwrap();
        assert_eq!(a, b);
    }
}
