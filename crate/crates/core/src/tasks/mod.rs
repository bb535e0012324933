//! Toy reasoning tasks, their verifiers, and the EOS-padded training corpus.
//!
//! Completions are expected as `<answer>BODY</answer>`. The verifier still
//! grades a bare body when no markup is present, but only tagged completions
//! earn the format bonus.

mod corpus;
mod countdown;
mod expr;
mod sudoku;

pub use corpus::{build_corpus, pad_response, Corpus, CorpusSample, TaskMix};
pub use countdown::{
    enumerate_answers, gen_countdown, verify_countdown, CountdownDifficulty, CountdownInstance,
};
pub use expr::{eval_expression, ExprError};
pub use sudoku::{gen_sudoku, solve_all, sudoku_valid, verify_sudoku, SudokuInstance};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight of the format bonus in [`RewardOutcome::total`].
pub const DEFAULT_LAMBDA_FMT: f64 = 0.1;

pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub correctness: u8,
    pub format_ok: u8,
    pub total: f64,
}

impl RewardOutcome {
    pub fn new(correct: bool, format_ok: bool, lambda_fmt: f64) -> Self {
        Self {
            correctness: correct as u8,
            format_ok: format_ok as u8,
            total: correct as u8 as f64 + lambda_fmt * format_ok as u8 as f64,
        }
    }

    pub fn with_lambda(self, lambda_fmt: f64) -> Self {
        Self::new(self.correctness == 1, self.format_ok == 1, lambda_fmt)
    }
}

/// Wraps `body` in answer markup.
pub fn tagged(body: &str) -> String {
    format!("{ANSWER_OPEN}{body}{ANSWER_CLOSE}")
}

/// Answer body and whether the completion is exactly one tagged answer.
pub(crate) fn extract_answer(text: &str) -> (&str, bool) {
    let trimmed = text.trim();
    if let Some(start) = trimmed.find(ANSWER_OPEN) {
        let rest = &trimmed[start + ANSWER_OPEN.len()..];
        if let Some(end) = rest.find(ANSWER_CLOSE) {
            let body = &rest[..end];
            let exact = start == 0 && end + ANSWER_CLOSE.len() == rest.len();
            return (body, exact);
        }
    }
    (trimmed, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Countdown,
    Sudoku,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskInstance {
    Countdown(CountdownInstance),
    Sudoku(SudokuInstance),
}

impl TaskInstance {
    pub fn kind(&self) -> TaskKind {
        match self {
            Self::Countdown(_) => TaskKind::Countdown,
            Self::Sudoku(_) => TaskKind::Sudoku,
        }
    }

    pub fn prompt_text(&self) -> String {
        match self {
            Self::Countdown(c) => c.prompt_text(),
            Self::Sudoku(s) => s.grid.clone(),
        }
    }

    /// Reference answer body, without markup.
    pub fn reference(&self) -> String {
        match self {
            Self::Countdown(c) => c.answers[0].clone(),
            Self::Sudoku(s) => s.solution.clone(),
        }
    }

    /// The reference answer as a full tagged completion.
    pub fn reference_completion(&self) -> String {
        tagged(&self.reference())
    }

    pub fn verify(&self, completion: &str) -> RewardOutcome {
        match self {
            Self::Countdown(c) => verify_countdown(c, completion),
            Self::Sudoku(s) => verify_sudoku(s, completion),
        }
    }

    pub fn generate(kind: TaskKind, difficulty: CountdownDifficulty, rng: &mut impl RngCore) -> Self {
        match kind {
            TaskKind::Countdown => Self::Countdown(gen_countdown(rng, difficulty)),
            TaskKind::Sudoku => Self::Sudoku(gen_sudoku(rng)),
        }
    }

    pub fn record(&self) -> DatasetRecord {
        DatasetRecord {
            prompt: self.prompt_text(),
            reference: self.reference(),
            task: self.kind(),
        }
    }
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub prompt: String,
    pub reference: String,
    pub task: TaskKind,
}

impl DatasetRecord {
    /// Rebuilds the instance behind a record.
    pub fn instance(&self) -> Result<TaskInstance> {
        match self.task {
            TaskKind::Countdown => {
                CountdownInstance::from_prompt(&self.prompt).map(TaskInstance::Countdown)
            }
            TaskKind::Sudoku => {
                let inst = SudokuInstance {
                    grid: self.prompt.clone(),
                    solution: self.reference.clone(),
                };
                if !inst.is_consistent() {
                    return Err(Error::format("dataset record", "inconsistent sudoku record"));
                }
                Ok(TaskInstance::Sudoku(inst))
            }
        }
    }
}
