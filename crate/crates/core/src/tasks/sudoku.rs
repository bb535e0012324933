use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use super::{extract_answer, RewardOutcome, DEFAULT_LAMBDA_FMT};

/// A 4x4 puzzle, both strings read row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SudokuInstance {
    /// Digits `1..=4` for clues, `0` for empty cells.
    pub grid: String,
    pub solution: String,
}

impl SudokuInstance {
    pub fn is_consistent(&self) -> bool {
        self.grid.len() == 16
            && self.grid.bytes().all(|b| (b'0'..=b'4').contains(&b))
            && sudoku_valid(&self.solution)
            && clues_kept(&self.grid, &self.solution)
    }
}

fn clues_kept(grid: &str, answer: &str) -> bool {
    grid.bytes()
        .zip(answer.bytes())
        .all(|(g, a)| g == b'0' || g == a)
}

const fn box_of(cell: usize) -> usize {
    (cell / 8) * 2 + (cell % 4) / 2
}

/// A complete grid over `1..=4` with no repeats in any row, column or box.
pub fn sudoku_valid(answer: &str) -> bool {
    let b = answer.as_bytes();
    if b.len() != 16 || !b.iter().all(|c| (b'1'..=b'4').contains(c)) {
        return false;
    }
    let groups = |key: fn(usize) -> usize| {
        (0..4).all(|g| {
            let mut seen = [false; 5];
            (0..16)
                .filter(|&i| key(i) == g)
                .all(|i| !std::mem::replace(&mut seen[(b[i] - b'0') as usize], true))
        })
    };
    groups(|i| i / 4) && groups(|i| i % 4) && groups(box_of)
}

fn fits(cells: &[u8; 16], i: usize, d: u8) -> bool {
    (0..16).all(|j| {
        j == i
            || cells[j] != d
            || (j / 4 != i / 4 && j % 4 != i % 4 && box_of(j) != box_of(i))
    })
}

fn fill(cells: &mut [u8; 16], rng: &mut impl RngCore) -> bool {
    let Some(i) = cells.iter().position(|&c| c == 0) else {
        return true;
    };
    let mut digits = [1u8, 2, 3, 4];
    digits.shuffle(rng);
    for d in digits {
        if fits(cells, i, d) {
            cells[i] = d;
            if fill(cells, rng) {
                return true;
            }
        }
    }
    cells[i] = 0;
    false
}

fn render(cells: &[u8; 16]) -> String {
    cells.iter().map(|&d| (b'0' + d) as char).collect()
}

/// Random solved grid by randomized backtracking, then 6 to 10 cells cleared.
pub fn gen_sudoku(rng: &mut impl RngCore) -> SudokuInstance {
    let mut cells = [0u8; 16];
    assert!(fill(&mut cells, rng), "an empty 4x4 grid is always completable");
    let solution = render(&cells);
    let mut order: Vec<usize> = (0..16).collect();
    order.shuffle(rng);
    let blanks = rng.random_range(6..=10);
    for &i in &order[..blanks] {
        cells[i] = 0;
    }
    SudokuInstance {
        grid: render(&cells),
        solution,
    }
}

/// Every completion of `grid`, in lexicographic order.
pub fn solve_all(grid: &str) -> Vec<String> {
    fn go(cells: &mut [u8; 16], out: &mut Vec<String>) {
        let Some(i) = cells.iter().position(|&c| c == 0) else {
            out.push(render(cells));
            return;
        };
        for d in 1..=4 {
            if fits(cells, i, d) {
                cells[i] = d;
                go(cells, out);
            }
        }
        cells[i] = 0;
    }
    let b = grid.as_bytes();
    if b.len() != 16 || !b.iter().all(|c| (b'0'..=b'4').contains(c)) {
        return Vec::new();
    }
    let mut cells = [0u8; 16];
    for (c, &g) in cells.iter_mut().zip(b) {
        *c = g - b'0';
    }
    let clues_ok = (0..16).all(|i| cells[i] == 0 || fits(&cells, i, cells[i]));
    let mut out = Vec::new();
    if clues_ok {
        go(&mut cells, &mut out);
    }
    out
}

pub fn verify_sudoku(instance: &SudokuInstance, completion: &str) -> RewardOutcome {
    let (body, exact) = extract_answer(completion);
    let shaped = body.len() == 16 && body.bytes().all(|b| (b'1'..=b'4').contains(&b));
    let correct = shaped && clues_kept(&instance.grid, body) && sudoku_valid(body);
    RewardOutcome::new(correct, exact && shaped, DEFAULT_LAMBDA_FMT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::{Purpose, RngStream};

    fn showcase() -> SudokuInstance {
        SudokuInstance {
            grid: "0000100420013142".into(),
            solution: "4213132424313142".into(),
        }
    }

    #[test]
    fn showcase_puzzle() {
        let p = showcase();
        assert!(p.is_consistent());
        let r = verify_sudoku(&p, "<answer>4213132424313142</answer>");
        assert_eq!((r.correctness, r.format_ok), (1, 1));
        // Changes the clue in cell 4.
        let moved = verify_sudoku(&p, "<answer>4213231424313142</answer>");
        assert_eq!(moved.correctness, 0);
        let short = verify_sudoku(&p, "<answer>421313242431314</answer>");
        assert_eq!((short.correctness, short.format_ok), (0, 0));
        assert_eq!(solve_all(&p.grid), vec![p.solution.clone()]);
    }

    #[test]
    fn validity() {
        assert!(sudoku_valid("1234341221434321"));
        assert!(!sudoku_valid("1234123412341234"));
        assert!(!sudoku_valid("1234341221434325"));
        assert!(!sudoku_valid("123434122143432"));
    }

    #[test]
    fn all_grids() {
        let grids = solve_all("0000000000000000");
        assert_eq!(grids.len(), 288);
        assert!(grids.iter().all(|g| sudoku_valid(g)));
    }

    #[test]
    fn generated_round_trip() {
        let rng = RngStream::new(8);
        for i in 0..100 {
            let p = gen_sudoku(&mut rng.stream(Purpose::Puzzle, i, 0));
            assert!(p.is_consistent());
            let blanks = p.grid.bytes().filter(|&b| b == b'0').count();
            assert!((6..=10).contains(&blanks));
            assert_eq!(verify_sudoku(&p, &super::super::tagged(&p.solution)).correctness, 1);
        }
    }
}
