//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam parameters {self:?}")))
        }
    }
}

/// First and second moments per parameter tensor, plus the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub params: AdamParams,
    pub first: Vec<DenseMatrix>,
    pub second: Vec<DenseMatrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(shapes: &[DenseMatrix], params: AdamParams) -> Self {
        let zeros = || shapes.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        OptimizerState {
            params,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    /// One update `θ ← θ − lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, weights: &mut [DenseMatrix], grads: &[DenseMatrix], lr: f64) -> Result<()> {
        if weights.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Argument("optimizer state does not match the parameters".into()));
        }
        for ((w, g), m) in weights.iter().zip(grads).zip(&self.first) {
            if (w.rows(), w.cols()) != (g.rows(), g.cols()) || (w.rows(), w.cols()) != (m.rows(), m.cols()) {
                return Err(Error::Argument("gradient shape does not match its parameter".into()));
            }
        }
        self.step += 1;
        let AdamParams { beta1, beta2, epsilon } = self.params;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((w, g), m), v) in weights.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let (wd, gd) = (w.data_mut(), g.data());
            for (((wi, &gi), mi), vi) in wd.iter_mut().zip(gd).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *wi -= lr * mhat / (vhat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
