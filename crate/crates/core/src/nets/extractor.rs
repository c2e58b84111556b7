use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conv::{ConvGrads, ConvTrace, MaskGain, MaskedConvLayer};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stream::ImageShape;
use crate::tensor::Matrix;

/// Layer stack of a masked extractor: `conv -> ReLU -> [2x2 max-pool]` per block,
/// then global average pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorSpec {
    pub widths: Vec<usize>,
    pub kernel_size: usize,
    /// Whether a stride-2 max-pool follows each block; same length as `widths`.
    pub pool_after: Vec<bool>,
    pub bias: bool,
    pub masked: bool,
    pub mask_gain: MaskGain,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec {
            widths: vec![16, 32, 64],
            kernel_size: 3,
            pool_after: vec![true, true, false],
            bias: true,
            masked: true,
            mask_gain: MaskGain::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedFeatureExtractor {
    pub input: ImageShape,
    pub layers: Vec<MaskedConvLayer>,
    pub pool_after: Vec<bool>,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    conv: ConvTrace,
    activated: Vec<f64>,
    pool_argmax: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ExtractorTrace {
    blocks: Vec<BlockTrace>,
    batch: usize,
    final_hw: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorGrads {
    pub layers: Vec<ConvGrads>,
}

impl ExtractorGrads {
    /// Same order as [`MaskedFeatureExtractor::params_mut`].
    pub fn into_flat(self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for g in self.layers {
            out.push(g.weight);
            out.extend(g.bias);
            out.extend(g.mask_logits);
        }
        out
    }
}

fn max_pool(input: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg, oh, ow)
}

impl MaskedFeatureExtractor {
    pub fn new(input: ImageShape, spec: &ExtractorSpec, rng: &mut Rng) -> Result<Self> {
        if spec.widths.is_empty() {
            return Err(Error::arg("extractor needs at least one layer"));
        }
        if spec.pool_after.len() != spec.widths.len() {
            return Err(Error::arg("pool_after must have one entry per layer"));
        }
        let mut layers = Vec::with_capacity(spec.widths.len());
        let mut cin = input.channels;
        let (mut h, mut w) = (input.height, input.width);
        for (i, (&width, &pool)) in spec.widths.iter().zip(&spec.pool_after).enumerate() {
            let mut layer = MaskedConvLayer::new(
                format!("conv{}", i + 1),
                cin,
                width,
                spec.kernel_size,
                spec.bias,
                spec.masked,
                rng,
            )?;
            layer.mask_gain = spec.mask_gain;
            layers.push(layer);
            cin = width;
            if pool {
                h /= 2;
                w /= 2;
            }
            if h == 0 || w == 0 {
                return Err(Error::arg("pooling shrinks the feature map to nothing"));
            }
        }
        Ok(MaskedFeatureExtractor {
            input,
            layers,
            pool_after: spec.pool_after.clone(),
            frozen: false,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    /// Convolution weights and biases; mask logits are training machinery and not counted.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(MaskedConvLayer::param_count).sum()
    }

    pub fn has_masks(&self) -> bool {
        self.layers.iter().any(|l| l.mask_logits.is_some())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// SHA-256 over every parameter, mask logits included.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            for v in l.weight.iter().chain(l.bias.iter().flatten()).chain(l.mask_logits.iter().flatten()) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Weight, then bias and mask logits when present, layer by layer.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(b) = &mut l.bias {
                out.push(b);
            }
            if let Some(e) = &mut l.mask_logits {
                out.push(e);
            }
        }
        out
    }

    /// For each tensor of [`Self::params_mut`], whether it holds mask logits.
    pub fn mask_param_flags(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(false);
            if l.bias.is_some() {
                out.push(false);
            }
            if l.mask_logits.is_some() {
                out.push(true);
            }
        }
        out
    }

    fn to_channel_major(&self, batch: &Matrix) -> Result<Vec<f64>> {
        let plane = self.input.height * self.input.width;
        if batch.cols != self.input.len() {
            return Err(Error::arg(format!(
                "extractor expects {} input values per example, got {}",
                self.input.len(),
                batch.cols
            )));
        }
        let n = batch.rows;
        let mut out = vec![0.0; batch.data.len()];
        for (b, row) in batch.iter_rows().enumerate() {
            for c in 0..self.input.channels {
                out[(c * n + b) * plane..(c * n + b + 1) * plane].copy_from_slice(&row[c * plane..(c + 1) * plane]);
            }
        }
        Ok(out)
    }

    fn run(&self, batch: &Matrix, masks: Option<&[Vec<f64>]>) -> Result<(Matrix, ExtractorTrace)> {
        if let Some(m) = masks {
            if m.len() != self.layers.len() {
                return Err(Error::arg("one mask per layer is required"));
            }
        }
        let n = batch.rows;
        let mut x = self.to_channel_major(batch)?;
        let (mut h, mut w) = (self.input.height, self.input.width);
        let mut blocks = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut y, conv) = layer.forward(&x, n, h, w, masks.map(|m| m[i].as_slice()))?;
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            let (next, pool_argmax) = if self.pool_after[i] {
                let (p, arg, oh, ow) = max_pool(&y, layer.out_channels * n, h, w);
                h = oh;
                w = ow;
                (p, Some(arg))
            } else {
                (y.clone(), None)
            };
            blocks.push(BlockTrace {
                conv,
                activated: y,
                pool_argmax,
            });
            x = next;
        }
        let c = self.output_dim();
        let hw = h * w;
        let mut feats = Matrix::zeros(n, c);
        for ch in 0..c {
            for b in 0..n {
                let s: f64 = x[(ch * n + b) * hw..(ch * n + b + 1) * hw].iter().sum();
                feats.row_mut(b)[ch] = s / hw as f64;
            }
        }
        Ok((
            feats,
            ExtractorTrace {
                blocks,
                batch: n,
                final_hw: hw,
            },
        ))
    }

    /// Pooled features, one row per example.
    pub fn extract_features(&self, batch: &Matrix) -> Result<Matrix> {
        self.run(batch, None).map(|(f, _)| f)
    }

    /// Forward pass with every layer's mask replaced by `masks`.
    pub fn extract_with_masks(&self, batch: &Matrix, masks: &[Vec<f64>]) -> Result<Matrix> {
        self.run(batch, Some(masks)).map(|(f, _)| f)
    }

    pub fn forward_train(&self, batch: &Matrix) -> Result<(Matrix, ExtractorTrace)> {
        self.run(batch, None)
    }

    pub fn backward(&self, trace: &ExtractorTrace, d_features: &Matrix) -> ExtractorGrads {
        let n = trace.batch;
        let c = self.output_dim();
        let hw = trace.final_hw;
        let mut grad = vec![0.0; c * n * hw];
        for ch in 0..c {
            for b in 0..n {
                let g = d_features.row(b)[ch] / hw as f64;
                grad[(ch * n + b) * hw..(ch * n + b + 1) * hw].iter_mut().for_each(|v| *v = g);
            }
        }
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (i, (layer, block)) in self.layers.iter().zip(&trace.blocks).enumerate().rev() {
            let mut d_act = match &block.pool_argmax {
                Some(arg) => {
                    let mut d = vec![0.0; block.activated.len()];
                    for (g, &src) in grad.iter().zip(arg) {
                        d[src] += g;
                    }
                    d
                }
                None => grad,
            };
            for (d, a) in d_act.iter_mut().zip(&block.activated) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let (g, d_in) = layer.backward(&block.conv, &d_act, i > 0);
            layer_grads.push(g);
            grad = d_in.unwrap_or_default();
        }
        layer_grads.reverse();
        ExtractorGrads { layers: layer_grads }
    }
}
