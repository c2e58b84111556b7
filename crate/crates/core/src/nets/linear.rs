use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, Matrix};

/// Fully connected layer `y = x W^T + b`; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

fn init_value(rng: &mut Rng, in_dim: usize) -> f64 {
    let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
    rng.random_range(-bound..bound)
}

impl Linear {
    /// Uniform weights in `±1/sqrt(in)`, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| init_value(rng, in_dim)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.in_dim {
            return Err(Error::arg(format!("linear layer expects {} inputs, got {}", self.in_dim, x.cols)));
        }
        let mut y = Matrix::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            y.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(x.rows, self.in_dim, self.out_dim, 1.0, &x.data, false, &self.weight, true, 1.0, &mut y.data);
        Ok(y)
    }

    /// Parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, x: &Matrix, d_out: &Matrix, need_input: bool) -> (LinearGrads, Option<Matrix>) {
        let mut weight = vec![0.0; self.weight.len()];
        gemm(self.out_dim, x.rows, self.in_dim, 1.0, &d_out.data, true, &x.data, false, 0.0, &mut weight);
        let mut bias = vec![0.0; self.out_dim];
        for row in d_out.iter_rows() {
            for (b, g) in bias.iter_mut().zip(row) {
                *b += g;
            }
        }
        let d_in = need_input.then(|| {
            let mut d = Matrix::zeros(x.rows, self.in_dim);
            gemm(x.rows, self.out_dim, self.in_dim, 1.0, &d_out.data, false, &self.weight, false, 0.0, &mut d.data);
            d
        });
        (LinearGrads { weight, bias }, d_in)
    }

    /// Grows to `out_dim` outputs and `in_dim` inputs, keeping existing weights in
    /// the top-left block and initialising the rest.
    pub fn grown(&self, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Linear> {
        if in_dim < self.in_dim || out_dim < self.out_dim {
            return Err(Error::arg("a layer can only grow"));
        }
        let mut weight = Vec::with_capacity(in_dim * out_dim);
        for o in 0..out_dim {
            for i in 0..in_dim {
                let v = if o < self.out_dim && i < self.in_dim {
                    self.weight[o * self.in_dim + i]
                } else {
                    init_value(rng, in_dim)
                };
                weight.push(v);
            }
        }
        let mut bias = self.bias.clone();
        bias.resize(out_dim, 0.0);
        Ok(Linear {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    /// Keeps the listed input columns, in order.
    pub fn select_inputs(&self, keep: &[usize]) -> Result<Linear> {
        if keep.iter().any(|&k| k >= self.in_dim) {
            return Err(Error::arg("kept input index out of range"));
        }
        let mut weight = Vec::with_capacity(keep.len() * self.out_dim);
        for o in 0..self.out_dim {
            weight.extend(keep.iter().map(|&i| self.weight[o * self.in_dim + i]));
        }
        Ok(Linear {
            in_dim: keep.len(),
            out_dim: self.out_dim,
            weight,
            bias: self.bias.clone(),
        })
    }

    pub fn params_mut(&mut self) -> [&mut Vec<f64>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

impl LinearGrads {
    pub fn into_flat(self) -> [Vec<f64>; 2] {
        [self.weight, self.bias]
    }
}
