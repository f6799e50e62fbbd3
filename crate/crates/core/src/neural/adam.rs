use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Adam moments, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new<P: Params<T>>(params: &P, config: AdamConfig) -> Self {
        let zeros = || params.param_slices().iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update `θ -= lr · m̂ / (√v̂ + ε)` using the configured learning rate.
    pub fn step<P: Params<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        self.step_with_lr(params, grads, self.config.lr)
    }

    pub fn step_with_lr<P: Params<T>>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Numerical(format!("non-finite gradient at Adam step {}", self.step + 1)));
        }
        self.step += 1;
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let eps = T::lit(self.config.eps);
        let lr = T::lit(lr);
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let g_slices = grads.param_slices();
        for (((p, g), m), v) in params
            .param_slices_mut()
            .into_iter()
            .zip(g_slices)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn shapes_match<P: Params<T>>(&self, params: &P) -> bool {
        let lens: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        self.first.iter().map(Vec::len).eq(lens.iter().copied())
            && self.second.iter().map(Vec::len).eq(lens.iter().copied())
    }
}
