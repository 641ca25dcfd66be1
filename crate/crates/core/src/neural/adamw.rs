//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::mlp::Parameters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers aligned to [`Parameters::slices`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<P: Parameters>(config: AdamWConfig, params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        OptimizerState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// `θ ← θ − lr · (m̂ / (√v̂ + eps) + wd · θ)` with bias-corrected moments.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_slices = grads.slices();
        let param_slices = params.slices_mut();
        if grad_slices.len() != self.m.len() || param_slices.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        for (g, m) in grad_slices.iter().zip(&self.m) {
            if g.len() != m.len() {
                return Err(Error::Shape("gradient does not match parameter shape".into()));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient contains NaN or infinity".into()));
            }
        }

        self.step += 1;
        let AdamWConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((theta, g), m), v) in param_slices
            .into_iter()
            .zip(grad_slices)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..theta.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * theta[i]);
            }
        }
        Ok(())
    }
}
