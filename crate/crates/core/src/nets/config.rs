use serde::{Deserialize, Serialize};

use super::extractor::ExtractorSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Concatenate,
    Average,
}

/// Feature space for nearest-mean-of-exemplars classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmeFeatures {
    /// Concatenated pooled outputs of all extractors.
    #[default]
    Extractor,
    /// The transformed, fused features that feed the fused head.
    Fused,
}

/// Optimisation and loss settings shared by every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of distillation inside the auxiliary loss.
    pub lambda1: f64,
    /// Weight of the auxiliary loss inside the total loss.
    pub lambda2: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    /// Learning rate for kernel-mask logits; `None` uses `learning_rate`.
    pub mask_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without training-loss improvement before stopping early.
    pub patience: usize,
    /// Epoch cap for fine-tuning after pruning.
    pub finetune_max_epochs: usize,
    pub fusion: FusionMode,
    pub common_dim: usize,
    pub seed: u64,
    pub extractor: ExtractorSpec,
    /// Random horizontal flips of training images.
    pub augment_flip: bool,
    /// Keep transforms of old extractors fixed along with the extractors.
    pub freeze_old_transforms: bool,
    /// Per-layer multipliers on the `1/n` pruning threshold; empty means all 1.
    pub prune_threshold_scales: Vec<f64>,
    /// Epochs used to re-fit the fused head when probing extractor subsets.
    pub probe_refit_epochs: usize,
    pub nme_features: NmeFeatures,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 0.1,
            temperature: 2.0,
            learning_rate: 1e-3,
            mask_learning_rate: None,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            finetune_max_epochs: 100,
            fusion: FusionMode::Concatenate,
            common_dim: 64,
            seed: 0,
            extractor: ExtractorSpec::default(),
            augment_flip: false,
            freeze_old_transforms: false,
            prune_threshold_scales: Vec::new(),
            probe_refit_epochs: 200,
            nme_features: NmeFeatures::Extractor,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(self.temperature >= 1.0) {
            return bad("temperature must be >= 1");
        }
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative");
        }
        if !(self.learning_rate > 0.0) || self.mask_learning_rate.is_some_and(|r| !(r > 0.0)) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.finetune_max_epochs == 0 || self.common_dim == 0 {
            return bad("batch size, epoch cap and common dimension must be positive");
        }
        if self.extractor.widths.is_empty() || self.extractor.widths.len() != self.extractor.pool_after.len() {
            return bad("extractor needs widths with matching pool_after flags");
        }
        if !self.prune_threshold_scales.is_empty() && self.prune_threshold_scales.len() != self.extractor.widths.len() {
            return bad("prune_threshold_scales needs one entry per extractor layer");
        }
        if self.prune_threshold_scales.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return bad("prune threshold scales must lie in (0, 1]");
        }
        Ok(())
    }
}
