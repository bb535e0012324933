use std::sync::Arc;

use super::vocab::{TokenId, Vocab};
use crate::error::{Error, Result};

/// Prompt plus a fixed-length response canvas with mask bookkeeping.
///
/// `response[i] == mask_id` exactly when `masked[i]`. Decoded positions are
/// never re-masked; every call to [`SequenceState::unmask`] returns a new
/// state one step further along.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceState {
    prompt: Arc<[TokenId]>,
    response: Vec<TokenId>,
    masked: Vec<bool>,
    step: usize,
    mask_id: TokenId,
    vocab_size: usize,
}

impl SequenceState {
    pub fn new(prompt: &[TokenId], gen_len: usize, vocab: &Vocab) -> Result<Self> {
        if gen_len == 0 {
            return Err(Error::config("gen_len must be >= 1"));
        }
        for (i, &t) in prompt.iter().enumerate() {
            vocab.check(t)?;
            if t == vocab.mask_id() {
                return Err(Error::PromptMasked(i));
            }
        }
        Ok(Self {
            prompt: prompt.into(),
            response: vec![vocab.mask_id(); gen_len],
            masked: vec![true; gen_len],
            step: 0,
            mask_id: vocab.mask_id(),
            vocab_size: vocab.size(),
        })
    }

    /// Rebuilds a state from raw arrays, e.g. a stored snapshot or a partially
    /// masked training sample. Validates the mask bookkeeping.
    pub fn from_parts(
        prompt: &[TokenId],
        response: Vec<TokenId>,
        step: usize,
        vocab: &Vocab,
    ) -> Result<Self> {
        for &t in prompt.iter().chain(response.iter()) {
            vocab.check(t)?;
        }
        let masked = response.iter().map(|&t| t == vocab.mask_id()).collect();
        Ok(Self {
            prompt: prompt.into(),
            response,
            masked,
            step,
            mask_id: vocab.mask_id(),
            vocab_size: vocab.size(),
        })
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn response(&self) -> &[TokenId] {
        &self.response
    }

    pub fn masked(&self) -> &[bool] {
        &self.masked
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn gen_len(&self) -> usize {
        self.response.len()
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt.len()
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.masked
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn is_complete(&self) -> bool {
        self.masked.iter().all(|&m| !m)
    }

    /// Prompt followed by response: the model input.
    pub fn full_tokens(&self) -> Vec<TokenId> {
        let mut v = Vec::with_capacity(self.prompt.len() + self.response.len());
        v.extend_from_slice(&self.prompt);
        v.extend_from_slice(&self.response);
        v
    }

    /// Same state with a replaced prompt; used by the prompt-perturbation
    /// baseline. The prompt may contain masks here.
    pub fn with_prompt(&self, prompt: Vec<TokenId>) -> Self {
        Self {
            prompt: prompt.into(),
            ..self.clone()
        }
    }

    /// Writes `tokens[k]` at `positions[k]` and advances the step counter.
    pub fn unmask(&self, positions: &[usize], tokens: &[TokenId]) -> Result<Self> {
        if positions.len() != tokens.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions but {} tokens",
                positions.len(),
                tokens.len()
            )));
        }
        let mut next = self.clone();
        for (&p, &t) in positions.iter().zip(tokens) {
            if p >= next.response.len() {
                return Err(Error::ShapeMismatch(format!(
                    "position {p} outside response of length {}",
                    next.response.len()
                )));
            }
            if t == self.mask_id || t as usize >= self.vocab_size {
                return Err(Error::InvalidToken {
                    token: t,
                    vocab_size: self.vocab_size,
                });
            }
            if !next.masked[p] {
                return Err(Error::DoubleDecode(p));
            }
            next.masked[p] = false;
            next.response[p] = t;
        }
        next.step += 1;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::toy()
    }

    #[test]
    fn new_state_is_fully_masked() {
        let v = vocab();
        let s = SequenceState::new(&[5, 7], 4, &v).unwrap();
        assert_eq!(s.response(), &[v.mask_id(); 4]);
        assert!(s.masked().iter().all(|&m| m));
        assert_eq!(s.step(), 0);

        let s = SequenceState::new(&[], 1, &v).unwrap();
        assert_eq!(s.response(), &[v.mask_id()]);
        assert_eq!(s.masked(), &[true]);
    }

    #[test]
    fn new_state_errors() {
        let v = vocab();
        assert!(matches!(
            SequenceState::new(&[2], 0, &v),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            SequenceState::new(&[99], 3, &v),
            Err(Error::InvalidToken { token: 99, .. })
        ));
    }

    #[test]
    fn unmask_writes_and_advances() {
        let v = vocab();
        let m = v.mask_id();
        let s = SequenceState::new(&[], 3, &v).unwrap();
        let s1 = s.unmask(&[1], &[v.eos_id()]).unwrap();
        assert_eq!(s1.response(), &[m, v.eos_id(), m]);
        assert_eq!(s1.masked(), &[true, false, true]);
        assert_eq!(s1.step(), 1);

        let (a, b) = (v.id("4").unwrap(), v.id("5").unwrap());
        let s2 = s.unmask(&[0, 2], &[a, b]).unwrap();
        assert_eq!(s2.response(), &[a, m, b]);
    }

    #[test]
    fn unmask_errors() {
        let v = vocab();
        let s = SequenceState::new(&[], 3, &v).unwrap();
        let s1 = s.unmask(&[1], &[v.eos_id()]).unwrap();
        assert!(matches!(
            s1.unmask(&[1], &[v.eos_id()]),
            Err(Error::DoubleDecode(1))
        ));
        assert!(matches!(
            s.unmask(&[0], &[v.mask_id()]),
            Err(Error::InvalidToken { .. })
        ));
        assert!(matches!(
            s.unmask(&[0, 0], &[3, 3]),
            Err(Error::DoubleDecode(0))
        ));
    }
}

impl SequenceState {
    /// Response text truncated at the first `<EOS>` (exclusive).
    pub fn decode_to_text(&self, vocab: &Vocab) -> Result<String> {
        let remaining = self.masked_count();
        if remaining > 0 {
            return Err(Error::IncompleteState(remaining));
        }
        vocab.decode_until_eos(&self.response)
    }
}
