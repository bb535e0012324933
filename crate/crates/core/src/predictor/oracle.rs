use std::collections::HashMap;

use super::{MaskPredictor, PredictorOutput};
use crate::error::{Error, Result};
use crate::seqcore::TokenId;

/// Scripted predictor: the rows it returns depend only on which response
/// positions are masked, never on any trained parameters.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    vocab_size: usize,
    mask_id: TokenId,
    script: HashMap<Vec<bool>, Vec<Vec<f64>>>,
    default_row: Vec<f64>,
}

impl OraclePredictor {
    pub fn new(vocab_size: usize, mask_id: TokenId, default_row: Vec<f64>) -> Result<Self> {
        check_row(&default_row, vocab_size)?;
        Ok(Self {
            vocab_size,
            mask_id,
            script: HashMap::new(),
            default_row,
        })
    }

    pub fn uniform(vocab_size: usize, mask_id: TokenId) -> Self {
        Self::new(vocab_size, mask_id, vec![1.0 / vocab_size as f64; vocab_size])
            .expect("uniform row is valid")
    }

    /// Registers the response rows returned whenever the masked-position
    /// pattern equals `pattern`.
    pub fn script(mut self, pattern: Vec<bool>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != pattern.len() {
            return Err(Error::ShapeMismatch(format!(
                "pattern of length {} but {} rows",
                pattern.len(),
                rows.len()
            )));
        }
        for row in &rows {
            check_row(row, self.vocab_size)?;
        }
        self.script.insert(pattern, rows);
        Ok(self)
    }
}

fn check_row(row: &[f64], vocab_size: usize) -> Result<()> {
    if row.len() != vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "row of length {} for vocab of size {vocab_size}",
            row.len()
        )));
    }
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config("oracle rows must be probability distributions"));
    }
    Ok(())
}

impl MaskPredictor for OraclePredictor {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<PredictorOutput> {
        let pattern: Vec<bool> = response.iter().map(|&t| t == self.mask_id).collect();
        let scripted = self.script.get(&pattern);
        let mut probs = Vec::with_capacity((prompt.len() + response.len()) * self.vocab_size);
        for _ in prompt {
            probs.extend_from_slice(&self.default_row);
        }
        for i in 0..response.len() {
            match scripted {
                Some(rows) => probs.extend_from_slice(&rows[i]),
                None => probs.extend_from_slice(&self.default_row),
            }
        }
        let logits = probs.iter().map(|p| p.ln()).collect();
        Ok(PredictorOutput {
            prompt_len: prompt.len(),
            vocab_size: self.vocab_size,
            logits,
            probs,
        })
    }
}
