//! Mask binarization and structural surgery on masked extractors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{MaskedConvLayer, MaskedFeatureExtractor};

/// One keep/drop flag per output kernel, per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMaskSet {
    pub layers: Vec<(String, Vec<bool>)>,
}

impl BinaryMaskSet {
    pub fn all_kept(extractor: &MaskedFeatureExtractor) -> Self {
        BinaryMaskSet {
            layers: extractor
                .layers
                .iter()
                .map(|l| (l.name.clone(), vec![true; l.out_channels]))
                .collect(),
        }
    }

    pub fn kept_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|(_, m)| m.iter().filter(|&&k| k).count()).collect()
    }

    pub fn to_named(&self) -> BTreeMap<String, Vec<bool>> {
        self.layers.iter().cloned().collect()
    }

    /// Per-layer channel scales with dropped kernels zeroed. Layers without a
    /// learned mask use scale 1.
    pub fn effective_masks(&self, extractor: &MaskedFeatureExtractor) -> Result<Vec<Vec<f64>>> {
        self.check(extractor)?;
        Ok(extractor
            .layers
            .iter()
            .zip(&self.layers)
            .map(|(l, (_, keep))| {
                let m = l.channel_scale().unwrap_or_else(|| vec![1.0; l.out_channels]);
                m.iter().zip(keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect()
            })
            .collect())
    }

    fn check(&self, extractor: &MaskedFeatureExtractor) -> Result<()> {
        if self.layers.len() != extractor.layers.len() {
            return Err(Error::arg(format!(
                "{} masks for {} layers",
                self.layers.len(),
                extractor.layers.len()
            )));
        }
        for (l, (name, keep)) in extractor.layers.iter().zip(&self.layers) {
            if keep.len() != l.out_channels {
                return Err(Error::arg(format!(
                    "mask for {name} has {} entries, layer {} has {} kernels",
                    keep.len(),
                    l.name,
                    l.out_channels
                )));
            }
            if !keep.iter().any(|&k| k) {
                return Err(Error::arg(format!("mask for {name} drops every kernel")));
            }
        }
        Ok(())
    }
}

/// Keeps kernel `h` of layer `l` iff `m[l][h] >= s_l / n_l`, where `s_l` is the
/// optional threshold scale (1 when `scales` is empty).
pub fn binarize_masks(extractor: &MaskedFeatureExtractor, scales: &[f64]) -> Result<BinaryMaskSet> {
    if !scales.is_empty() && scales.len() != extractor.layers.len() {
        return Err(Error::config(format!(
            "{} threshold scales for {} layers",
            scales.len(),
            extractor.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(extractor.layers.len());
    for (i, l) in extractor.layers.iter().enumerate() {
        let keep = match l.mask() {
            None => vec![true; l.out_channels],
            Some(m) => {
                let s = scales.get(i).copied().unwrap_or(1.0);
                let threshold = s / l.out_channels as f64;
                let keep: Vec<bool> = m.iter().map(|&v| v >= threshold).collect();
                if !keep.iter().any(|&k| k) {
                    if s <= 1.0 {
                        unreachable!("a softmax always has an entry at or above 1/n");
                    }
                    return Err(Error::config(format!(
                        "threshold scale {s} drops every kernel of {}",
                        l.name
                    )));
                }
                keep
            }
        };
        layers.push((l.name.clone(), keep));
    }
    Ok(BinaryMaskSet { layers })
}

fn indices(keep: &[bool]) -> Vec<usize> {
    keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect()
}

/// Removes dropped kernels (and the matching input channels of the next layer)
/// and folds each surviving channel scale into its kernel and bias. The result
/// carries no mask logits. Also returns the kept indices of the final layer.
pub fn structural_prune(
    extractor: &MaskedFeatureExtractor,
    masks: &BinaryMaskSet,
) -> Result<(MaskedFeatureExtractor, Vec<usize>)> {
    masks.check(extractor)?;
    let mut layers = Vec::with_capacity(extractor.layers.len());
    let mut in_keep: Vec<usize> = (0..extractor.input.channels).collect();
    for (l, (_, keep)) in extractor.layers.iter().zip(&masks.layers) {
        let out_keep = indices(keep);
        let scale = l.channel_scale().unwrap_or_else(|| vec![1.0; l.out_channels]);
        let kk = l.kernel_size * l.kernel_size;
        let mut weight = Vec::with_capacity(out_keep.len() * in_keep.len() * kk);
        for &o in &out_keep {
            for &c in &in_keep {
                let base = (o * l.in_channels + c) * kk;
                weight.extend(l.weight[base..base + kk].iter().map(|w| w * scale[o]));
            }
        }
        let bias = l.bias.as_ref().map(|b| out_keep.iter().map(|&o| b[o] * scale[o]).collect());
        layers.push(MaskedConvLayer {
            name: l.name.clone(),
            in_channels: in_keep.len(),
            out_channels: out_keep.len(),
            kernel_size: l.kernel_size,
            weight,
            bias,
            mask_logits: None,
            mask_gain: l.mask_gain,
        });
        in_keep = out_keep;
    }
    Ok((
        MaskedFeatureExtractor {
            input: extractor.input,
            layers,
            pool_after: extractor.pool_after.clone(),
            frozen: extractor.frozen,
        },
        in_keep,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPruneStats {
    pub name: String,
    pub kept: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    pub layers: Vec<LayerPruneStats>,
    pub params_before: usize,
    pub params_after: usize,
    pub kept_fraction: f64,
    pub param_fraction: f64,
}

pub fn prune_stats(before: &MaskedFeatureExtractor, after: &MaskedFeatureExtractor) -> Result<PruneStats> {
    if before.layers.len() != after.layers.len() {
        return Err(Error::arg("extractors have different depths"));
    }
    let layers: Vec<LayerPruneStats> = before
        .layers
        .iter()
        .zip(&after.layers)
        .map(|(b, a)| LayerPruneStats {
            name: b.name.clone(),
            kept: a.out_channels,
            total: b.out_channels,
        })
        .collect();
    let kept: usize = layers.iter().map(|l| l.kept).sum();
    let total: usize = layers.iter().map(|l| l.total).sum();
    let params_before = before.param_count();
    let params_after = after.param_count();
    Ok(PruneStats {
        layers,
        params_before,
        params_after,
        kept_fraction: kept as f64 / total as f64,
        param_fraction: params_after as f64 / params_before as f64,
    })
}
