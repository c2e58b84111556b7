//! Convolution whose output channels are scaled by a learnable soft mask.
//!
//! Activations inside an extractor are stored channel-major: `C x N x H x W`.
//! The mask multiplies each channel's complete output (convolution plus bias),
//! so a zero mask entry silences that channel exactly.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::softmax;
use crate::rng::Rng;
use crate::tensor::gemm;

/// `softmax(logits)`: strictly positive and summing to one.
pub fn mask_values(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::arg("mask logits must be non-empty"));
    }
    Ok(softmax(logits, 1.0))
}

/// Pulls a gradient on mask values back through the softmax to its logits.
pub fn mask_logit_grad(mask: &[f64], d_mask: &[f64]) -> Vec<f64> {
    let dot: f64 = mask.iter().zip(d_mask).map(|(m, d)| m * d).sum();
    mask.iter().zip(d_mask).map(|(m, d)| m * (d - dot)).collect()
}

/// Constant factor between the soft mask and the per-channel output scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskGain {
    /// Scale `n * m`: a uniform mask leaves the convolution unchanged.
    #[default]
    Width,
    /// Scale `m` itself: a uniform mask divides every channel by `n`.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedConvLayer {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    /// `out x in x k x k`, row-major.
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    /// `None` once the mask has been folded into the weights (or was never used).
    pub mask_logits: Option<Vec<f64>>,
    #[serde(default)]
    pub mask_gain: MaskGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub mask_logits: Option<Vec<f64>>,
}

/// Intermediate values the backward pass needs.
#[derive(Debug, Clone)]
pub struct ConvTrace {
    col: Vec<f64>,
    pre_mask: Vec<f64>,
    mask: Option<Vec<f64>>,
    batch: usize,
    height: usize,
    width: usize,
}

impl MaskedConvLayer {
    /// He-normal weights, zero bias and zero mask logits (uniform mask `1/n`).
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        bias: bool,
        masked: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::arg("convolution needs positive channel counts"));
        }
        if kernel_size.is_multiple_of(2) {
            return Err(Error::arg("kernel size must be odd"));
        }
        let fan_in = (in_channels * kernel_size * kernel_size) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let weight = (0..out_channels * in_channels * kernel_size * kernel_size)
            .map(|_| normal.sample(rng))
            .collect();
        Ok(MaskedConvLayer {
            name: name.into(),
            in_channels,
            out_channels,
            kernel_size,
            weight,
            bias: bias.then(|| vec![0.0; out_channels]),
            mask_logits: masked.then(|| vec![0.0; out_channels]),
            mask_gain: MaskGain::default(),
        })
    }

    /// Random bias values, used by tests that need non-trivial biases.
    pub fn randomize_bias(&mut self, rng: &mut Rng, scale: f64) {
        if let Some(b) = &mut self.bias {
            b.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
        }
    }

    pub fn mask(&self) -> Option<Vec<f64>> {
        self.mask_logits.as_deref().map(|e| softmax(e, 1.0))
    }

    fn gain(&self) -> f64 {
        match self.mask_gain {
            MaskGain::Width => self.out_channels as f64,
            MaskGain::Unit => 1.0,
        }
    }

    /// Factor applied to each output channel: the soft mask times the gain.
    pub fn channel_scale(&self) -> Option<Vec<f64>> {
        let g = self.gain();
        self.mask().map(|m| m.into_iter().map(|v| v * g).collect())
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }

    fn im2col(&self, input: &[f64], batch: usize, height: usize, width: usize) -> Vec<f64> {
        let k = self.kernel_size;
        let pad = (k / 2) as isize;
        let plane = height * width;
        let cols = batch * plane;
        let mut col = vec![0.0; self.patch_len() * cols];
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for n in 0..batch {
                        let src = &input[(c * batch + n) * plane..(c * batch + n + 1) * plane];
                        let out = &mut dst[n * plane..(n + 1) * plane];
                        for y in 0..height {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= height as isize {
                                continue;
                            }
                            let x0 = (-dx).max(0) as usize;
                            let x1 = (width as isize - dx.max(0)).max(0) as usize;
                            if x0 >= x1 {
                                continue;
                            }
                            let s0 = (x0 as isize + dx) as usize;
                            let srow = &src[sy as usize * width..(sy as usize + 1) * width];
                            out[y * width + x0..y * width + x1].copy_from_slice(&srow[s0..s0 + (x1 - x0)]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[f64], batch: usize, height: usize, width: usize) -> Vec<f64> {
        let k = self.kernel_size;
        let pad = (k / 2) as isize;
        let plane = height * width;
        let cols = batch * plane;
        let mut input = vec![0.0; self.in_channels * cols];
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * cols..(row + 1) * cols];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for n in 0..batch {
                        let dst = &mut input[(c * batch + n) * plane..(c * batch + n + 1) * plane];
                        let s = &src[n * plane..(n + 1) * plane];
                        for y in 0..height {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= height as isize {
                                continue;
                            }
                            let x0 = (-dx).max(0) as usize;
                            let x1 = (width as isize - dx.max(0)).max(0) as usize;
                            if x0 >= x1 {
                                continue;
                            }
                            let d0 = (x0 as isize + dx) as usize;
                            let drow = &mut dst[sy as usize * width..(sy as usize + 1) * width];
                            for (d, v) in drow[d0..d0 + (x1 - x0)].iter_mut().zip(&s[y * width + x0..y * width + x1]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
        input
    }

    /// Same-padded, stride-1 convolution of a channel-major batch.
    ///
    /// `mask_override` replaces the learned soft mask (e.g. with a pruned one).
    pub fn forward(
        &self,
        input: &[f64],
        batch: usize,
        height: usize,
        width: usize,
        mask_override: Option<&[f64]>,
    ) -> Result<(Vec<f64>, ConvTrace)> {
        let plane = batch * height * width;
        if input.len() != self.in_channels * plane {
            return Err(Error::arg(format!(
                "layer {} expects {} input channels, got {} values for {batch}x{height}x{width}",
                self.name,
                self.in_channels,
                input.len()
            )));
        }
        let mask = match mask_override {
            Some(m) if m.len() != self.out_channels => {
                return Err(Error::arg(format!("mask override for {} has wrong length", self.name)));
            }
            Some(m) => Some(m.to_vec()),
            None => self.channel_scale(),
        };
        let col = self.im2col(input, batch, height, width);
        let mut pre = vec![0.0; self.out_channels * plane];
        gemm(self.out_channels, self.patch_len(), plane, 1.0, &self.weight, false, &col, false, 0.0, &mut pre);
        if let Some(b) = &self.bias {
            for (o, bo) in b.iter().enumerate() {
                pre[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bo);
            }
        }
        let out = match &mask {
            Some(m) => {
                let mut out = pre.clone();
                for (o, mo) in m.iter().enumerate() {
                    out[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v *= mo);
                }
                out
            }
            None => pre.clone(),
        };
        Ok((
            out,
            ConvTrace {
                col,
                pre_mask: pre,
                mask,
                batch,
                height,
                width,
            },
        ))
    }

    /// Returns parameter gradients and, if requested, the input gradient.
    pub fn backward(&self, trace: &ConvTrace, d_out: &[f64], need_input: bool) -> (ConvGrads, Option<Vec<f64>>) {
        let plane = trace.batch * trace.height * trace.width;
        let mut d_pre = d_out.to_vec();
        let mut d_logits = None;
        if let Some(m) = &trace.mask {
            let d_mask: Vec<f64> = (0..self.out_channels)
                .map(|o| {
                    let r = o * plane..(o + 1) * plane;
                    d_out[r.clone()].iter().zip(&trace.pre_mask[r]).map(|(a, b)| a * b).sum()
                })
                .collect();
            for (o, mo) in m.iter().enumerate() {
                d_pre[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v *= mo);
            }
            if self.mask_logits.is_some() {
                let g = self.gain();
                let soft: Vec<f64> = m.iter().map(|v| v / g).collect();
                let d_soft: Vec<f64> = d_mask.iter().map(|v| v * g).collect();
                d_logits = Some(mask_logit_grad(&soft, &d_soft));
            }
        }
        let d_bias = self.bias.as_ref().map(|_| {
            (0..self.out_channels)
                .map(|o| d_pre[o * plane..(o + 1) * plane].iter().sum())
                .collect()
        });
        let k = self.patch_len();
        let mut d_weight = vec![0.0; self.weight.len()];
        gemm(self.out_channels, plane, k, 1.0, &d_pre, false, &trace.col, true, 0.0, &mut d_weight);
        let d_input = need_input.then(|| {
            let mut d_col = vec![0.0; k * plane];
            gemm(k, self.out_channels, plane, 1.0, &self.weight, true, &d_pre, false, 0.0, &mut d_col);
            self.col2im(&d_col, trace.batch, trace.height, trace.width)
        });
        (
            ConvGrads {
                weight: d_weight,
                bias: d_bias,
                mask_logits: d_logits,
            },
            d_input,
        )
    }
}
