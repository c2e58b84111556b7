//! Adam over a list of flat parameter tensors.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    rates: Vec<f64>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            rates: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Per-tensor learning rates overriding `learning_rate`.
    pub fn with_rates(mut self, rates: Vec<f64>) -> Self {
        self.rates = rates;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. The tensor list must keep the same shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::arg(format!("{} parameter tensors, {} gradients", params.len(), grads.len())));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != grads.len() {
            return Err(Error::state("optimizer state was built for a different parameter list"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != g.len() || m.len() != g.len() {
                return Err(Error::arg("parameter and gradient shapes differ"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        if !self.rates.is_empty() && self.rates.len() != grads.len() {
            return Err(Error::arg("per-tensor rates do not match the parameter list"));
        }
        for (j, (((p, g), m), v)) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v).enumerate() {
            let lr = self.rates.get(j).copied().unwrap_or(self.learning_rate);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
