use mdlm_core::predictor::{
    grad_check, pretrain_loss, sft_loss, MaskPredictor, MaskRatio, ModelConfig, ModelParams,
    Sample,
};
use mdlm_core::{Error, RngStream};

const MASK: u32 = 0;

fn cfg(n_layers: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 8,
        d_model: 8,
        n_layers,
        n_heads: 2,
        d_ff: 8,
        max_len: 8,
    }
}

fn uniform_model(vocab: usize) -> ModelParams {
    let mut p = ModelParams::init(
        ModelConfig {
            vocab_size: vocab,
            ..cfg(1)
        },
        1,
    )
    .unwrap();
    p.block_mut("head").unwrap().fill(0.0);
    p
}

#[test]
fn fully_masked_uniform_loss_is_len_ln_v() {
    let p = uniform_model(8);
    let out = pretrain_loss(
        &p,
        &[vec![2, 3, 4, 5]],
        MaskRatio::Fixed { t: 1.0 },
        &RngStream::new(0),
        0,
        MASK,
    )
    .unwrap();
    let want = 4.0 * 8f64.ln();
    assert!((out.loss - want).abs() < 1e-12, "{} vs {want}", out.loss);
    assert!((want - 8.3178).abs() < 1e-4);
    assert_eq!(out.masked_tokens, 4);

    let sft = sft_loss(
        &p,
        &[Sample {
            prompt: vec![6, 7],
            response: vec![2, 3, 4, 5],
        }],
        MaskRatio::Fixed { t: 1.0 },
        &RngStream::new(0),
        0,
        MASK,
    )
    .unwrap();
    assert!((sft.loss - want).abs() < 1e-12);
}

#[test]
fn empty_mask_contributes_nothing() {
    let p = ModelParams::init(cfg(1), 2).unwrap();
    let out = sft_loss(
        &p,
        &[Sample {
            prompt: vec![3],
            response: vec![],
        }],
        MaskRatio::Fixed { t: 0.5 },
        &RngStream::new(0),
        0,
        MASK,
    )
    .unwrap();
    assert_eq!(out.loss, 0.0);
    assert!(out.grads.iter().all(|&g| g == 0.0));
}

#[test]
fn masked_prompt_is_a_contract_violation() {
    let p = ModelParams::init(cfg(1), 2).unwrap();
    let r = sft_loss(
        &p,
        &[Sample {
            prompt: vec![3, MASK],
            response: vec![4, 5],
        }],
        MaskRatio::Fixed { t: 0.5 },
        &RngStream::new(0),
        0,
        MASK,
    );
    assert!(matches!(r, Err(Error::PromptMasked(1))));
}

#[test]
fn sft_reduces_to_pretrain_with_empty_prompt() {
    let p = ModelParams::init(cfg(2), 4).unwrap();
    let xs = vec![vec![1, 2, 3, 4, 5, 6], vec![7, 7, 1, 2, 1, 1]];
    let samples: Vec<Sample> = xs
        .iter()
        .map(|x| Sample {
            prompt: vec![],
            response: x.clone(),
        })
        .collect();
    let rng = RngStream::new(11);
    let a = pretrain_loss(&p, &xs, MaskRatio::default(), &rng, 3, MASK).unwrap();
    let b = sft_loss(&p, &samples, MaskRatio::default(), &rng, 3, MASK).unwrap();
    assert_eq!(a.loss, b.loss);
    assert_eq!(a.grads, b.grads);
}

#[test]
fn loss_is_covariant_under_vocab_relabeling() {
    // swap tokens 2 and 5 in both the data and the embedding/head rows
    let p = ModelParams::init(cfg(1), 8).unwrap();
    let mut q = p.clone();
    let d = 8;
    {
        let e = q.block_mut("embed").unwrap();
        for j in 0..d {
            e.swap(2 * d + j, 5 * d + j);
        }
    }
    {
        let h = q.block_mut("head").unwrap();
        for r in 0..d {
            h.swap(r * 8 + 2, r * 8 + 5);
        }
    }
    let relabel = |t: u32| match t {
        2 => 5,
        5 => 2,
        x => x,
    };
    let xs = vec![vec![2, 3, 5, 5, 1, 2]];
    let ys: Vec<Vec<u32>> = xs.iter().map(|x| x.iter().map(|&t| relabel(t)).collect()).collect();
    let rng = RngStream::new(5);
    let a = pretrain_loss(&p, &xs, MaskRatio::default(), &rng, 0, MASK).unwrap();
    let b = pretrain_loss(&q, &ys, MaskRatio::default(), &rng, 0, MASK).unwrap();
    assert!((a.loss - b.loss).abs() < 1e-12);
}

#[test]
fn rows_sum_to_one_for_random_models() {
    for seed in 0..5 {
        let p = ModelParams::init(cfg(2), seed).unwrap();
        let out = p.predict(&[1, 2], &[0, 0, 3, 0]).unwrap();
        for r in 0..out.rows() {
            assert!((out.probs_row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

fn check_pretrain(n_layers: usize, threshold: f64) {
    let p = ModelParams::init(cfg(n_layers), 21).unwrap();
    assert!(p.len() <= 2000, "{} params", p.len());
    let xs = vec![vec![1, 2, 3, 4, 5], vec![6, 7, 1, 3, 3, 2]];
    let rng = RngStream::new(3);
    let report = grad_check(
        &p,
        |q| {
            let o = pretrain_loss(q, &xs, MaskRatio::default(), &rng, 0, MASK)?;
            Ok((o.loss, o.grads))
        },
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_err < threshold,
        "{n_layers} layers: {report:?}"
    );
}

#[test]
fn head_only_gradient_matches_finite_differences() {
    check_pretrain(0, 1e-6);
}

#[test]
fn two_layer_gradient_matches_finite_differences() {
    check_pretrain(2, 1e-4);
}

#[test]
fn sft_gradient_matches_finite_differences() {
    let p = ModelParams::init(cfg(1), 33).unwrap();
    let batch = vec![Sample {
        prompt: vec![4, 5],
        response: vec![1, 2, 7, 7],
    }];
    let rng = RngStream::new(9);
    let report = grad_check(
        &p,
        |q| {
            let o = sft_loss(q, &batch, MaskRatio::default(), &rng, 1, MASK)?;
            Ok((o.loss, o.grads))
        },
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn grad_check_rejects_zero_epsilon() {
    let p = ModelParams::init(cfg(0), 1).unwrap();
    let r = grad_check(&p, |q| Ok((0.0, vec![0.0; q.len()])), 0.0);
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}
