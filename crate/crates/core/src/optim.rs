//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 gradient-norm clip; `0` disables.
    pub max_grad_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// Applies one update in place. Returns the pre-clip gradient norm.
    pub fn update(&mut self, cfg: &AdamWConfig, params: &mut [f64], grads: &[f64]) -> f64 {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let clip = if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
            cfg.max_grad_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] * clip;
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= cfg.lr * (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
        }
        norm
    }

    /// Rounds the moments to `f32` precision so checkpoint resume is exact.
    pub fn round_to_f32(&mut self) {
        for x in self.m.iter_mut().chain(self.v.iter_mut()) {
            *x = *x as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_quadratic() {
        let cfg = AdamWConfig {
            lr: 0.05,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut x = vec![3.0, -2.0];
        let mut st = AdamWState::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            st.update(&cfg, &mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            max_grad_norm: 0.0,
            ..Default::default()
        };
        let mut x = vec![1.0];
        AdamWState::new(1).update(&cfg, &mut x, &[5.0]);
        assert!((x[0] - 0.9).abs() < 1e-6);
    }
}
