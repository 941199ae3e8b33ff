use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates for a list of parameter tensors, plus
/// the step count used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. Gradients are checked for finiteness
    /// before any parameter moves.
    pub fn step(
        &mut self,
        config: &AdamConfig,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!("tensor {i}: size mismatch")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter tensor {i}")));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let step_size = config.learning_rate / (1.0 - config.beta1.powi(t));
        let inv_c2 = 1.0 / (1.0 - config.beta2.powi(t));
        let (b1, b2, eps) = (config.beta1, config.beta2, config.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &g), m), v) in p.iter_mut().zip(*g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step_size * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
