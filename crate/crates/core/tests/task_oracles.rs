use std::collections::HashSet;

use mdlm_core::seqcore::{Purpose, RngStream};
use mdlm_core::tasks::{
    enumerate_answers, gen_countdown, gen_sudoku, solve_all, tagged, verify_countdown,
    verify_sudoku, CountdownDifficulty, CountdownInstance, SudokuInstance,
};

/// Every expression text over up to three of `numbers`.
fn expressions(numbers: [i64; 3]) -> Vec<String> {
    let ops = ['+', '-', '*', '/'];
    let mut out: Vec<String> = numbers.iter().map(|n| n.to_string()).collect();
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            for o in ops {
                out.push(format!("{}{o}{}", numbers[i], numbers[j]));
            }
            let k = 3 - i - j;
            for o1 in ops {
                for o2 in ops {
                    let (a, b, c) = (numbers[i], numbers[j], numbers[k]);
                    out.push(format!("{a}{o1}{b}{o2}{c}"));
                    out.push(format!("({a}{o1}{b}){o2}{c}"));
                    out.push(format!("{a}{o1}({b}{o2}{c})"));
                }
            }
        }
    }
    out
}

#[test]
fn countdown_verifier_matches_enumeration() {
    for a in 1..=6 {
        for b in a..=6 {
            for c in b..=7 {
                let numbers = [a, b, c];
                let exprs = expressions(numbers);
                let mut targets: HashSet<i64> = HashSet::new();
                for t in -10..=60 {
                    targets.insert(t);
                }
                for t in targets {
                    let answers: HashSet<String> = enumerate_answers(numbers, t).into_iter().collect();
                    let Ok(inst) = CountdownInstance::new(numbers, t) else {
                        assert!(answers.is_empty());
                        continue;
                    };
                    for e in &exprs {
                        let got = verify_countdown(&inst, &tagged(e)).correctness == 1;
                        assert_eq!(got, answers.contains(e), "{e} vs {numbers:?} -> {t}");
                    }
                }
            }
        }
    }
}

#[test]
fn countdown_round_trip() {
    let rng = RngStream::new(17);
    for i in 0..500 {
        let inst = gen_countdown(&mut rng.stream(Purpose::Questions, i, 0), CountdownDifficulty::default());
        let r = verify_countdown(&inst, &tagged(&inst.answers[0]));
        assert_eq!((r.correctness, r.format_ok), (1, 1));
    }
}

#[test]
fn sudoku_verifier_matches_solver() {
    let all = solve_all("0000000000000000");
    let rng = RngStream::new(23);
    for i in 0..100 {
        let p = gen_sudoku(&mut rng.stream(Purpose::Puzzle, i, 0));
        let solved: HashSet<String> = solve_all(&p.grid).into_iter().collect();
        assert!(solved.contains(&p.solution));
        for g in &all {
            let accepted = verify_sudoku(&p, &tagged(g)).correctness == 1;
            assert_eq!(accepted, solved.contains(g), "{g} for {}", p.grid);
        }
    }
    let p = SudokuInstance {
        grid: "0000100420013142".into(),
        solution: "4213132424313142".into(),
    };
    assert_eq!(verify_sudoku(&p, &tagged(&p.solution)).correctness, 1);
}
