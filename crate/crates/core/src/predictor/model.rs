use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{dot, matmul, matmul_a_bt, matmul_at_b_acc};
use super::{softmax_in_place, MaskPredictor, PredictorOutput};
use crate::error::{Error, Result};
use crate::seqcore::{Purpose, RngStream, TokenId};

const NORM_EPS: f64 = 1e-5;

/// Transformer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Maximum `prompt + response` length (rows of the position table).
    pub max_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.d_model == 0 || self.d_ff == 0 || self.max_len == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let (v, d, f) = (self.vocab_size, self.d_model, self.d_ff);
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            blocks.push(ParamBlock {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        };
        push("embed".into(), v, d);
        push("pos_embed".into(), self.max_len, d);
        for l in 0..self.n_layers {
            push(format!("layers.{l}.norm1"), 1, d);
            push(format!("layers.{l}.wq"), d, d);
            push(format!("layers.{l}.wk"), d, d);
            push(format!("layers.{l}.wv"), d, d);
            push(format!("layers.{l}.wo"), d, d);
            push(format!("layers.{l}.norm2"), 1, d);
            push(format!("layers.{l}.w1"), d, f);
            push(format!("layers.{l}.b1"), 1, f);
            push(format!("layers.{l}.w2"), f, d);
            push(format!("layers.{l}.b2"), 1, d);
        }
        push("norm_f".into(), 1, d);
        push("head".into(), d, v);
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(ParamBlock::len).sum()
    }
}

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    norm1: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    norm2: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Offsets {
    embed: usize,
    pos: usize,
    layers: Vec<LayerOffsets>,
    norm_f: usize,
    head: usize,
}

impl Offsets {
    fn new(cfg: &ModelConfig) -> Self {
        let blocks = cfg.blocks();
        let at = |name: &str| blocks.iter().find(|b| b.name == name).unwrap().offset;
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let p = |s: &str| at(&format!("layers.{l}.{s}"));
                LayerOffsets {
                    norm1: p("norm1"),
                    wq: p("wq"),
                    wk: p("wk"),
                    wv: p("wv"),
                    wo: p("wo"),
                    norm2: p("norm2"),
                    w1: p("w1"),
                    b1: p("b1"),
                    w2: p("w2"),
                    b2: p("b2"),
                }
            })
            .collect();
        Self {
            embed: at("embed"),
            pos: at("pos_embed"),
            layers,
            norm_f: at("norm_f"),
            head: at("head"),
        }
    }
}

/// Parameters of the bidirectional mask predictor, stored as one flat vector
/// in [`ModelConfig::blocks`] order. Gradients use the same layout.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    offsets: Offsets,
    pub data: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.data == other.data
    }
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            offsets: Offsets::new(&config),
            data: vec![0.0; config.param_count()],
            config,
        })
    }

    pub fn from_data(config: ModelConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    /// Gaussian initialisation from the `ParamInit` stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = RngStream::new(seed).stream(Purpose::ParamInit, 0, 0);
        let resid_scale = 1.0 / ((2 * config.n_layers.max(1)) as f64).sqrt();
        for block in config.blocks() {
            let leaf = block.name.rsplit('.').next().unwrap();
            let std = match leaf {
                "embed" | "pos_embed" => 0.5,
                "wq" | "wk" | "wv" | "w1" => 1.0 / (block.rows as f64).sqrt(),
                "wo" | "w2" => resid_scale / (block.rows as f64).sqrt(),
                "head" => 0.02,
                "norm1" | "norm2" | "norm_f" => {
                    p.data[block.range()].fill(1.0);
                    continue;
                }
                _ => continue,
            };
            for x in &mut p.data[block.range()] {
                *x = std * gaussian(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.config
            .blocks()
            .into_iter()
            .find(|b| b.name == name)
            .map(|b| &self.data[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let block = self.config.blocks().into_iter().find(|b| b.name == name)?;
        Some(&mut self.data[block.range()])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rounds every parameter to the nearest `f32`, so that checkpoints
    /// (stored as `f32`) reload bit-exactly.
    pub fn round_to_f32(&mut self) {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
    }

    fn w(&self, offset: usize, len: usize) -> &[f64] {
        &self.data[offset..offset + len]
    }

    /// Forward pass retaining every intermediate needed by [`Self::backward`].
    pub fn forward_cached(&self, tokens: &[TokenId]) -> Result<ForwardCache> {
        let cfg = &self.config;
        let (t_len, d, f, v) = (tokens.len(), cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let (nh, hd) = (cfg.n_heads, cfg.head_dim());
        if t_len == 0 || t_len > cfg.max_len {
            return Err(Error::ShapeMismatch(format!(
                "sequence length {t_len} outside 1..={}",
                cfg.max_len
            )));
        }
        let o = &self.offsets;
        let mut h = vec![0.0; t_len * d];
        for (t, &tok) in tokens.iter().enumerate() {
            if tok as usize >= v {
                return Err(Error::InvalidToken {
                    token: tok,
                    vocab_size: v,
                });
            }
            let e = self.w(o.embed + tok as usize * d, d);
            let p = self.w(o.pos + t * d, d);
            for j in 0..d {
                h[t * d + j] = e[j] + p[j];
            }
        }
        let scale = 1.0 / (hd as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for (li, lo) in o.layers.iter().enumerate() {
            let x_in = h;
            let (a, rms1) = rmsnorm(&x_in, self.w(lo.norm1, d), t_len, d);
            let mut q = vec![0.0; t_len * d];
            let mut k = vec![0.0; t_len * d];
            let mut vv = vec![0.0; t_len * d];
            matmul(&a, self.w(lo.wq, d * d), t_len, d, d, &mut q);
            matmul(&a, self.w(lo.wk, d * d), t_len, d, d, &mut k);
            matmul(&a, self.w(lo.wv, d * d), t_len, d, d, &mut vv);
            // per-head contiguous copies: [head][t][hd]
            let qh = split_heads(&q, t_len, nh, hd);
            let kh = split_heads(&k, t_len, nh, hd);
            let vh = split_heads(&vv, t_len, nh, hd);
            let mut att = vec![0.0; nh * t_len * t_len];
            let mut ctx_h = vec![0.0; nh * t_len * hd];
            for hh in 0..nh {
                let base = hh * t_len * hd;
                for t in 0..t_len {
                    let qrow = &qh[base + t * hd..base + (t + 1) * hd];
                    let row = &mut att[(hh * t_len + t) * t_len..(hh * t_len + t + 1) * t_len];
                    for (u, r) in row.iter_mut().enumerate() {
                        *r = dot(qrow, &kh[base + u * hd..base + (u + 1) * hd]) * scale;
                    }
                    softmax_in_place(row);
                    let out = &mut ctx_h[base + t * hd..base + (t + 1) * hd];
                    for (u, &pr) in row.iter().enumerate() {
                        let vrow = &vh[base + u * hd..base + (u + 1) * hd];
                        for (c, &vx) in out.iter_mut().zip(vrow) {
                            *c += pr * vx;
                        }
                    }
                }
            }
            let ctx = merge_heads(&ctx_h, t_len, nh, hd);
            let mut attn_out = vec![0.0; t_len * d];
            matmul(&ctx, self.w(lo.wo, d * d), t_len, d, d, &mut attn_out);
            let h_mid: Vec<f64> = x_in.iter().zip(&attn_out).map(|(x, y)| x + y).collect();
            let (b, rms2) = rmsnorm(&h_mid, self.w(lo.norm2, d), t_len, d);
            let mut u = vec![0.0; t_len * f];
            matmul(&b, self.w(lo.w1, d * f), t_len, d, f, &mut u);
            let b1 = self.w(lo.b1, f);
            for t in 0..t_len {
                for j in 0..f {
                    u[t * f + j] += b1[j];
                }
            }
            let act: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
            let mut ff = vec![0.0; t_len * d];
            matmul(&act, self.w(lo.w2, f * d), t_len, f, d, &mut ff);
            let b2 = self.w(lo.b2, d);
            let mut out = h_mid.clone();
            for t in 0..t_len {
                for j in 0..d {
                    out[t * d + j] += ff[t * d + j] + b2[j];
                }
            }
            if !out.iter().all(|x| x.is_finite()) {
                return Err(Error::NumericalOverflow { layer: li });
            }
            layers.push(LayerCache {
                x_in,
                a,
                rms1,
                qh,
                kh,
                vh,
                att,
                ctx,
                h_mid,
                b,
                rms2,
                u,
                act,
            });
            h = out;
        }
        let (z, rms_f) = rmsnorm(&h, self.w(o.norm_f, d), t_len, d);
        let mut logits = vec![0.0; t_len * v];
        matmul(&z, self.w(o.head, d * v), t_len, d, v, &mut logits);
        if !logits.iter().all(|x| x.is_finite()) {
            return Err(Error::NumericalOverflow {
                layer: cfg.n_layers,
            });
        }
        let mut probs = logits.clone();
        for row in probs.chunks_exact_mut(v) {
            softmax_in_place(row);
        }
        Ok(ForwardCache {
            t_len,
            tokens: tokens.to_vec(),
            layers,
            h_final: h,
            z,
            rms_f,
            logits,
            probs,
        })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d logits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut [f64]) {
        let cfg = &self.config;
        let (t_len, d, f, v) = (cache.t_len, cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let (nh, hd) = (cfg.n_heads, cfg.head_dim());
        assert_eq!(dlogits.len(), t_len * v);
        assert_eq!(grads.len(), self.data.len());
        let o = &self.offsets;

        matmul_at_b_acc(&cache.z, dlogits, t_len, d, v, &mut grads[o.head..o.head + d * v]);
        let mut dz = vec![0.0; t_len * d];
        matmul_a_bt(dlogits, self.w(o.head, d * v), t_len, v, d, &mut dz);
        let mut dh = rmsnorm_backward(
            &cache.h_final,
            self.w(o.norm_f, d),
            &cache.rms_f,
            &dz,
            t_len,
            d,
            &mut grads[o.norm_f..o.norm_f + d],
        );

        let scale = 1.0 / (hd as f64).sqrt();
        for (lo, lc) in o.layers.iter().zip(&cache.layers).rev() {
            // feed-forward branch; dh is d/d(out), out = h_mid + ff + b2
            {
                let gb2 = &mut grads[lo.b2..lo.b2 + d];
                for t in 0..t_len {
                    for j in 0..d {
                        gb2[j] += dh[t * d + j];
                    }
                }
            }
            matmul_at_b_acc(&lc.act, &dh, t_len, f, d, &mut grads[lo.w2..lo.w2 + f * d]);
            let mut dact = vec![0.0; t_len * f];
            matmul_a_bt(&dh, self.w(lo.w2, f * d), t_len, d, f, &mut dact);
            let du: Vec<f64> = dact
                .iter()
                .zip(&lc.u)
                .map(|(g, &x)| g * gelu_grad(x))
                .collect();
            {
                let gb1 = &mut grads[lo.b1..lo.b1 + f];
                for t in 0..t_len {
                    for j in 0..f {
                        gb1[j] += du[t * f + j];
                    }
                }
            }
            matmul_at_b_acc(&lc.b, &du, t_len, d, f, &mut grads[lo.w1..lo.w1 + d * f]);
            let mut db = vec![0.0; t_len * d];
            matmul_a_bt(&du, self.w(lo.w1, d * f), t_len, f, d, &mut db);
            let dmid_norm = rmsnorm_backward(
                &lc.h_mid,
                self.w(lo.norm2, d),
                &lc.rms2,
                &db,
                t_len,
                d,
                &mut grads[lo.norm2..lo.norm2 + d],
            );
            let dmid: Vec<f64> = dh.iter().zip(&dmid_norm).map(|(a, b)| a + b).collect();

            // attention branch; h_mid = x_in + ctx * wo
            matmul_at_b_acc(&lc.ctx, &dmid, t_len, d, d, &mut grads[lo.wo..lo.wo + d * d]);
            let mut dctx = vec![0.0; t_len * d];
            matmul_a_bt(&dmid, self.w(lo.wo, d * d), t_len, d, d, &mut dctx);
            let dctx_h = split_heads(&dctx, t_len, nh, hd);
            let mut dqh = vec![0.0; nh * t_len * hd];
            let mut dkh = vec![0.0; nh * t_len * hd];
            let mut dvh = vec![0.0; nh * t_len * hd];
            let mut dp = vec![0.0; t_len];
            for hh in 0..nh {
                let base = hh * t_len * hd;
                for t in 0..t_len {
                    let prow = &lc.att[(hh * t_len + t) * t_len..(hh * t_len + t + 1) * t_len];
                    let dc = &dctx_h[base + t * hd..base + (t + 1) * hd];
                    for u in 0..t_len {
                        dp[u] = dot(dc, &lc.vh[base + u * hd..base + (u + 1) * hd]);
                        let pr = prow[u];
                        let dv = &mut dvh[base + u * hd..base + (u + 1) * hd];
                        for (x, &g) in dv.iter_mut().zip(dc) {
                            *x += pr * g;
                        }
                    }
                    let mean = dot(prow, &dp);
                    let qrow = &lc.qh[base + t * hd..base + (t + 1) * hd];
                    for u in 0..t_len {
                        let ds = prow[u] * (dp[u] - mean) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = &lc.kh[base + u * hd..base + (u + 1) * hd];
                        let dq = &mut dqh[base + t * hd..base + (t + 1) * hd];
                        for (x, &kx) in dq.iter_mut().zip(krow) {
                            *x += ds * kx;
                        }
                        let dk = &mut dkh[base + u * hd..base + (u + 1) * hd];
                        for (x, &qx) in dk.iter_mut().zip(qrow) {
                            *x += ds * qx;
                        }
                    }
                }
            }
            let dq = merge_heads(&dqh, t_len, nh, hd);
            let dk = merge_heads(&dkh, t_len, nh, hd);
            let dvv = merge_heads(&dvh, t_len, nh, hd);
            matmul_at_b_acc(&lc.a, &dq, t_len, d, d, &mut grads[lo.wq..lo.wq + d * d]);
            matmul_at_b_acc(&lc.a, &dk, t_len, d, d, &mut grads[lo.wk..lo.wk + d * d]);
            matmul_at_b_acc(&lc.a, &dvv, t_len, d, d, &mut grads[lo.wv..lo.wv + d * d]);
            let mut da = vec![0.0; t_len * d];
            let mut tmp = vec![0.0; t_len * d];
            for (g, w) in [(&dq, lo.wq), (&dk, lo.wk), (&dvv, lo.wv)] {
                matmul_a_bt(g, self.w(w, d * d), t_len, d, d, &mut tmp);
                for (x, y) in da.iter_mut().zip(&tmp) {
                    *x += y;
                }
            }
            let dx_norm = rmsnorm_backward(
                &lc.x_in,
                self.w(lo.norm1, d),
                &lc.rms1,
                &da,
                t_len,
                d,
                &mut grads[lo.norm1..lo.norm1 + d],
            );
            dh = dmid.iter().zip(&dx_norm).map(|(a, b)| a + b).collect();
        }

        for (t, &tok) in cache.tokens.iter().enumerate() {
            let row = &dh[t * d..(t + 1) * d];
            let e = o.embed + tok as usize * d;
            for (g, &x) in grads[e..e + d].iter_mut().zip(row) {
                *g += x;
            }
            let p = o.pos + t * d;
            for (g, &x) in grads[p..p + d].iter_mut().zip(row) {
                *g += x;
            }
        }
    }
}

impl MaskPredictor for ModelParams {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn predict(&self, prompt: &[TokenId], response: &[TokenId]) -> Result<PredictorOutput> {
        let mut tokens = Vec::with_capacity(prompt.len() + response.len());
        tokens.extend_from_slice(prompt);
        tokens.extend_from_slice(response);
        let cache = self.forward_cached(&tokens)?;
        Ok(PredictorOutput {
            prompt_len: prompt.len(),
            vocab_size: self.config.vocab_size,
            logits: cache.logits,
            probs: cache.probs,
        })
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    x_in: Vec<f64>,
    a: Vec<f64>,
    rms1: Vec<f64>,
    qh: Vec<f64>,
    kh: Vec<f64>,
    vh: Vec<f64>,
    att: Vec<f64>,
    ctx: Vec<f64>,
    h_mid: Vec<f64>,
    b: Vec<f64>,
    rms2: Vec<f64>,
    u: Vec<f64>,
    act: Vec<f64>,
}

/// Activations of one forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    t_len: usize,
    layers: Vec<LayerCache>,
    h_final: Vec<f64>,
    z: Vec<f64>,
    rms_f: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    tokens: Vec<TokenId>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.t_len
    }

    pub fn is_empty(&self) -> bool {
        self.t_len == 0
    }
}

fn rmsnorm(x: &[f64], g: &[f64], t_len: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; t_len * d];
    let mut rms = vec![0.0; t_len];
    for t in 0..t_len {
        let row = &x[t * d..(t + 1) * d];
        let r = (dot(row, row) / d as f64 + NORM_EPS).sqrt();
        rms[t] = r;
        for j in 0..d {
            y[t * d + j] = row[j] / r * g[j];
        }
    }
    (y, rms)
}

fn rmsnorm_backward(
    x: &[f64],
    g: &[f64],
    rms: &[f64],
    dy: &[f64],
    t_len: usize,
    d: usize,
    dg: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; t_len * d];
    for t in 0..t_len {
        let row = &x[t * d..(t + 1) * d];
        let dyr = &dy[t * d..(t + 1) * d];
        let r = rms[t];
        let mut s = 0.0;
        for j in 0..d {
            dg[j] += dyr[j] * row[j] / r;
            s += dyr[j] * g[j] * row[j];
        }
        let c = s / (d as f64 * r * r * r);
        for j in 0..d {
            dx[t * d + j] = dyr[j] * g[j] / r - row[j] * c;
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    let sech2 = 1.0 - th * th;
    0.5 * (1.0 + th) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn split_heads(x: &[f64], t_len: usize, nh: usize, hd: usize) -> Vec<f64> {
    let d = nh * hd;
    let mut out = vec![0.0; t_len * d];
    for t in 0..t_len {
        for h in 0..nh {
            let src = &x[t * d + h * hd..t * d + (h + 1) * hd];
            out[(h * t_len + t) * hd..(h * t_len + t + 1) * hd].copy_from_slice(src);
        }
    }
    out
}

fn merge_heads(x: &[f64], t_len: usize, nh: usize, hd: usize) -> Vec<f64> {
    let d = nh * hd;
    let mut out = vec![0.0; t_len * d];
    for t in 0..t_len {
        for h in 0..nh {
            out[t * d + h * hd..t * d + (h + 1) * hd]
                .copy_from_slice(&x[(h * t_len + t) * hd..(h * t_len + t + 1) * hd]);
        }
    }
    out
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller on (0,1) draws
    let u1 = crate::seqcore::open01(rng);
    let u2 = crate::seqcore::open01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::MaskPredictor;

    pub(crate) fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 8,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 12,
            max_len: 12,
        }
    }

    #[test]
    fn param_count_is_deterministic() {
        let c = tiny();
        let blocks = c.blocks();
        let last = blocks.last().unwrap();
        assert_eq!(last.offset + last.len(), c.param_count());
        assert_eq!(ModelParams::init(c, 1).unwrap().len(), c.param_count());
    }

    #[test]
    fn rows_are_distributions() {
        let p = ModelParams::init(tiny(), 3).unwrap();
        let out = p.predict(&[1, 2, 3], &[0, 0, 5, 0]).unwrap();
        for r in 0..out.rows() {
            let row = out.probs_row(r);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn zero_head_gives_uniform_rows() {
        let mut p = ModelParams::init(tiny(), 3).unwrap();
        p.block_mut("head").unwrap().fill(0.0);
        let out = p.predict(&[1], &[0, 0, 0]).unwrap();
        for &x in &out.probs {
            assert!((x - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_is_bidirectional() {
        let p = ModelParams::init(tiny(), 5).unwrap();
        let a = p.predict(&[], &[2, 0, 0, 0, 0]).unwrap();
        let b = p.predict(&[], &[3, 0, 0, 0, 0]).unwrap();
        let last = 4;
        let delta: f64 = a
            .response_probs(last)
            .iter()
            .zip(b.response_probs(last))
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(delta > 1e-9, "position 0 must influence position L-1");
    }

    #[test]
    fn forward_is_deterministic() {
        let p = ModelParams::init(tiny(), 9).unwrap();
        let a = p.predict(&[1, 2], &[0, 4, 0]).unwrap();
        let b = p.predict(&[1, 2], &[0, 4, 0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overflow_reports_layer() {
        let mut p = ModelParams::init(tiny(), 9).unwrap();
        p.block_mut("layers.1.b2").unwrap()[0] = f64::INFINITY;
        assert!(matches!(
            p.predict(&[1], &[0]),
            Err(Error::NumericalOverflow { layer: 1 })
        ));
    }

    #[test]
    fn too_long_input_rejected() {
        let p = ModelParams::init(tiny(), 9).unwrap();
        assert!(p.predict(&[1; 10], &[0; 3]).is_err());
    }
}
