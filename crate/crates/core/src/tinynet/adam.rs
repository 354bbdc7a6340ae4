use serde::{Deserialize, Serialize};

use super::tape::{Grads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay: each step subtracts `lr · weight_decay · w`.
    pub weight_decay: f64,
    /// The learning rate ramps linearly from `lr / warmup_steps` to `lr`
    /// over this many steps. Zero disables the ramp.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
            warmup_steps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self { config, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Learning rate used by step `t` (1-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        let c = &self.config;
        if c.warmup_steps == 0 || t >= c.warmup_steps {
            c.lr
        } else {
            c.lr * t as f64 / c.warmup_steps as f64
        }
    }

    /// Applies one update. Non-finite gradients leave the parameters
    /// untouched and return [`Error::Numeric`], as does an update that
    /// overflows a weight.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at step {}", self.t + 1)));
        }
        let c = self.config;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let lr = self.lr_at(self.t);
        for (i, p) in params.params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.tensors[i]);
            for j in 0..p.data.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let w = p.data[j] as f64;
                let next = w - lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * w);
                p.data[j] = next as f32;
            }
        }
        params.bump();
        if params.params.iter().any(|p| p.data.iter().any(|w| !w.is_finite())) {
            return Err(Error::Numeric(format!("parameters diverged at step {}", self.t)));
        }
        Ok(())
    }
}
