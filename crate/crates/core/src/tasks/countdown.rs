use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::expr::eval_expression;
use super::{extract_answer, RewardOutcome, DEFAULT_LAMBDA_FMT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountdownDifficulty {
    /// Operands are drawn from `1..=max_operand`.
    pub max_operand: i64,
    /// Targets are kept in `1..=max_target`.
    pub max_target: i64,
}

impl Default for CountdownDifficulty {
    fn default() -> Self {
        Self {
            max_operand: 20,
            max_target: 99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountdownInstance {
    pub numbers: [i64; 3],
    pub target: i64,
    /// Every expression using each number once that reaches `target`, in
    /// enumeration order. The first one is the reference answer.
    pub answers: Vec<String>,
}

impl CountdownInstance {
    pub fn new(numbers: [i64; 3], target: i64) -> Result<Self> {
        if numbers.iter().any(|&n| !(1..=99).contains(&n)) {
            return Err(Error::config(format!("operands must lie in 1..=99, got {numbers:?}")));
        }
        let answers = enumerate_answers(numbers, target);
        if answers.is_empty() {
            return Err(Error::config(format!("{numbers:?} cannot reach {target}")));
        }
        Ok(Self {
            numbers,
            target,
            answers,
        })
    }

    /// `a,b,c=target`.
    pub fn prompt_text(&self) -> String {
        let [a, b, c] = self.numbers;
        format!("{a},{b},{c}={}", self.target)
    }

    pub fn from_prompt(prompt: &str) -> Result<Self> {
        let bad = || Error::format("countdown prompt", prompt.to_string());
        let (nums, target) = prompt.split_once('=').ok_or_else(bad)?;
        let nums: Vec<i64> = nums
            .split(',')
            .map(|n| n.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let numbers: [i64; 3] = nums.try_into().map_err(|_| bad())?;
        Self::new(numbers, target.parse().map_err(|_| bad())?)
    }
}

const OPS: [char; 4] = ['+', '-', '*', '/'];

fn apply(op: char, x: i64, y: i64) -> Option<i64> {
    match op {
        '+' => Some(x + y),
        '-' => Some(x - y),
        '*' => Some(x * y),
        _ => (y != 0 && x % y == 0).then(|| x / y),
    }
}

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// `(text, value)` for every arrangement: operand orders, operator pairs, and
/// the flat and both parenthesised forms. Values are computed directly, not
/// by parsing the text.
fn arrangements(numbers: [i64; 3]) -> Vec<(String, Option<i64>)> {
    let mut out = Vec::with_capacity(6 * 16 * 3);
    for p in PERMS {
        let [a, b, c] = p.map(|i| numbers[i]);
        for o1 in OPS {
            for o2 in OPS {
                let left = apply(o1, a, b).and_then(|ab| apply(o2, ab, c));
                let right = apply(o2, b, c).and_then(|bc| apply(o1, a, bc));
                let tight = |o: char| o == '*' || o == '/';
                let flat = if tight(o2) && !tight(o1) { right } else { left };
                out.push((format!("{a}{o1}{b}{o2}{c}"), flat));
                out.push((format!("({a}{o1}{b}){o2}{c}"), left));
                out.push((format!("{a}{o1}({b}{o2}{c})"), right));
            }
        }
    }
    out
}

/// All distinct expressions over `numbers` that evaluate to `target`.
pub fn enumerate_answers(numbers: [i64; 3], target: i64) -> Vec<String> {
    let mut seen = BTreeSet::new();
    arrangements(numbers)
        .into_iter()
        .filter(|(_, v)| *v == Some(target))
        .filter_map(|(s, _)| seen.insert(s.clone()).then_some(s))
        .collect()
}

/// Draws operands, then a target uniformly among the reachable values in
/// range. Redraws the operands if none are reachable.
pub fn gen_countdown(rng: &mut impl RngCore, difficulty: CountdownDifficulty) -> CountdownInstance {
    let max_op = difficulty.max_operand.clamp(1, 99);
    loop {
        let numbers = [0; 3].map(|_| rng.random_range(1..=max_op));
        let reachable: Vec<i64> = arrangements(numbers)
            .into_iter()
            .filter_map(|(_, v)| v)
            .filter(|v| (1..=difficulty.max_target).contains(v))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if reachable.is_empty() {
            continue;
        }
        let target = reachable[rng.random_range(0..reachable.len())];
        return CountdownInstance::new(numbers, target).expect("target is reachable");
    }
}

pub fn verify_countdown(instance: &CountdownInstance, completion: &str) -> RewardOutcome {
    let (body, exact) = extract_answer(completion);
    let format_ok = exact
        && !body.is_empty()
        && body.chars().all(|c| c.is_ascii_digit() || "+-*/()".contains(c));
    let correct = match eval_expression(body) {
        Ok((value, mut literals)) => {
            literals.sort_unstable();
            let mut want = instance.numbers.to_vec();
            want.sort_unstable();
            value == instance.target && literals == want
        }
        Err(_) => false,
    };
    RewardOutcome::new(correct, format_ok, DEFAULT_LAMBDA_FMT)
}
