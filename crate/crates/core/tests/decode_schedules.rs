use mdlm_core::decode::{
    apply_eoser, build_schedule, select_positions, Candidate, DecodeConfig, DecodeMode,
    EoserConfig, Scheduler,
};
use proptest::prelude::*;

#[test]
fn ass_sizes_for_every_power_of_two() {
    for s_total in 2..=10usize {
        let l = 1 << s_total;
        let sched = build_schedule(&DecodeConfig::ass(l)).unwrap();
        let mut want: Vec<usize> = (0..s_total).map(|s| 1 << s).collect();
        want[s_total - 1] += 1;
        assert_eq!(sched.sizes, want);
        assert_eq!(sched.gen_len(), l);
    }
}

#[test]
fn sizes_sum_to_gen_len_over_modes() {
    for s_total in 2..=10usize {
        let l = 1 << s_total;
        for steps in (0..=s_total).map(|k| 1 << k) {
            let cfg = DecodeConfig::uniform(l, steps);
            assert_eq!(build_schedule(&cfg).unwrap().gen_len(), l);
            for n_blocks in (0..=s_total).map(|k| 1usize << k) {
                let cfg = DecodeConfig::semi_ar(l, steps, l / n_blocks);
                if let Ok(sched) = build_schedule(&cfg) {
                    assert_eq!(sched.gen_len(), l);
                    assert_eq!(sched.blocks.len(), n_blocks);
                }
            }
        }
        for m in 1..=s_total {
            for mode in [DecodeMode::FullDiffusion, DecodeMode::SemiAr { block_len: 0 }] {
                let mut cfg = DecodeConfig::ass(l);
                cfg.scheduler = Scheduler::BlockAss { steps_per_block: m };
                cfg.mode = mode;
                let sched = build_schedule(&cfg).unwrap();
                assert_eq!(sched.gen_len(), l);
                if mode != DecodeMode::FullDiffusion {
                    assert_eq!(sched.blocks.last().unwrap().end, l);
                    // Every step fits inside its block.
                    for s in 0..sched.steps() {
                        let done_in_block: usize = (0..=s)
                            .filter(|&t| sched.block_of_step[t] == sched.block_of_step[s])
                            .map(|t| sched.sizes[t])
                            .sum();
                        assert!(done_in_block <= sched.region(s).len());
                    }
                }
            }
        }
    }
}

#[test]
fn gamma_properties() {
    for s_total in 2..=10usize {
        let l = 1 << s_total;
        let e = EoserConfig {
            gamma_min: 0.3,
            gamma_max: 0.9,
            renormalize_ass: false,
        };
        let u = build_schedule(&DecodeConfig::uniform(l, s_total.min(l)).with_eoser(e));
        if let Ok(u) = u {
            assert!((u.gammas[0] - 0.3).abs() < 1e-12);
            assert!((u.gammas.last().unwrap() - 0.9).abs() < 1e-12);
            assert!(u.gammas.windows(2).all(|w| w[0] <= w[1]));
        }
        let a = build_schedule(&DecodeConfig::ass(l).with_eoser(e)).unwrap();
        let cap = 0.3 + 0.6 * ((1u64 << (s_total - 1)) + 1) as f64 / (1u64 << s_total) as f64;
        assert!(a.gammas.windows(2).all(|w| w[0] < w[1]));
        assert!(a.gammas.iter().all(|&g| g <= cap + 1e-15));
    }
}

#[test]
fn schedule_dump_golden() {
    let cfg = DecodeConfig::ass(16).with_eoser(EoserConfig::ass_default());
    let text = build_schedule(&cfg).unwrap().to_text();
    let golden = include_str!("golden/schedule_ass16.toml");
    assert_eq!(text, golden);
}

fn candidates(scores: &[f64]) -> Vec<Candidate> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &c)| Candidate {
            position: i,
            token: 2 + (i % 3) as u32,
            confidence: c,
        })
        .collect()
}

proptest! {
    #[test]
    fn selection_invariant_under_monotone_maps(
        scores in prop::collection::vec(0.001f64..1.0, 1..24),
        k_frac in 0.0f64..=1.0,
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let c = candidates(&scores);
        let k = ((scores.len() as f64) * k_frac) as usize;
        let base = select_positions(&c, &scores, k, 0..scores.len()).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let logs: Vec<f64> = scores.iter().map(|s| s.ln()).collect();
        let cubes: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        for t in [affine, logs, cubes] {
            prop_assert_eq!(&select_positions(&c, &t, k, 0..scores.len()).unwrap(), &base);
        }
    }

    #[test]
    fn eoser_only_moves_eos(scores in prop::collection::vec(0.001f64..1.0, 1..24), gamma in 0.01f64..=1.0) {
        let c = candidates(&scores);
        let adj = apply_eoser(&c, gamma, 2);
        for (cand, (&before, &after)) in c.iter().zip(scores.iter().zip(&adj)) {
            if cand.token == 2 {
                prop_assert_eq!(after, before * gamma);
            } else {
                prop_assert_eq!(after, before);
            }
        }
    }

    #[test]
    fn uniform_sizes_sum(steps_pow in 0u32..8, extra in 0u32..3) {
        let steps = 1usize << steps_pow;
        let l = steps << extra;
        let sched = build_schedule(&DecodeConfig::uniform(l, steps)).unwrap();
        prop_assert_eq!(sched.gen_len(), l);
        prop_assert!(sched.sizes.iter().all(|&s| s == l / steps));
    }
}
