//! AdamW with decoupled weight decay and a warmup plus cosine schedule.

use std::f64::consts::PI;

use super::model::{Gradients, ProbeFloat, ProbeParams};

/// Linear warmup from 0 to `base` over `warmup` steps, then cosine decay to 0
/// at `max_iters`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub max_iters: usize,
}

impl LrSchedule {
    pub fn new(base: f64, warmup_fraction: f64, max_iters: usize) -> Self {
        Self {
            base,
            warmup: (warmup_fraction * max_iters as f64).round() as usize,
            max_iters,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.base * step as f64 / self.warmup as f64;
        }
        if step >= self.max_iters {
            return 0.0;
        }
        let span = (self.max_iters - self.warmup).max(1) as f64;
        let progress = (step - self.warmup) as f64 / span;
        self.base * 0.5 * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<F: ProbeFloat>(params: &ProbeParams<F>, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr`. Weight decay applies to every
    /// trainable tensor.
    pub fn step<F: ProbeFloat>(&mut self, params: &mut ProbeParams<F>, grads: &Gradients<F>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        for (k, (p, g)) in params.trainable_mut().into_iter().zip(grads.tensors()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let gi = g[i].f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let denom = (v[i] / bc2).sqrt() + self.eps;
                let updated = p[i].f64() * decay - lr * m_hat / denom;
                p[i] = F::of(updated);
            }
        }
    }
}
