use serde::{Deserialize, Serialize};

use crate::losses::LossBreakdown;
use crate::pruning::PruneStats;

/// Loss history of one optimisation stage (joint training or fine-tuning).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTelemetry {
    pub epochs_run: usize,
    pub steps: usize,
    /// Example-weighted mean of each epoch's step losses.
    pub epoch_losses: Vec<LossBreakdown>,
}

impl StageTelemetry {
    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.epoch_losses.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Every extractor except the named one.
    Drop,
    /// The named extractor plus the current round's.
    KeepOnly,
}

/// Accuracy of the trained model with some extractors removed at inference.
/// Class means are recomputed in the reduced feature space and the fused head
/// is re-fit on exemplars only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    /// 1-based round whose extractor the probe targets.
    pub extractor: usize,
    pub accuracy: f64,
    pub subset_accuracy: Vec<f64>,
    pub head_accuracy: f64,
    pub head_subset_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based.
    pub round: usize,
    pub new_classes: Vec<usize>,
    /// Nearest-mean-of-exemplars accuracy over every class seen so far.
    pub accuracy: f64,
    /// Entry `k` covers the classes introduced in round `k + 1`.
    pub subset_accuracy: Vec<f64>,
    pub subset_sizes: Vec<usize>,
    /// Argmax accuracy of the inference head.
    pub head_accuracy: f64,
    pub head_subset_accuracy: Vec<f64>,
    /// Nearest-mean accuracy in the fused, transformed feature space.
    pub fused_nme_accuracy: f64,
    /// Head accuracy right after pruning, before fine-tuning.
    pub surgery_head_accuracy: Option<f64>,
    pub param_count: usize,
    pub size_ratio: f64,
    pub prune: Option<PruneStats>,
    pub joint: StageTelemetry,
    pub finetune: Option<StageTelemetry>,
    pub memory_size: usize,
    pub train_checksum: String,
    pub test_checksum: String,
    pub probes: Vec<ProbeReport>,
}

#[cfg(test)]
pub(crate) fn blank_report(round: usize) -> RoundReport {
    RoundReport {
        round,
        new_classes: vec![],
        accuracy: 0.0,
        subset_accuracy: vec![],
        subset_sizes: vec![],
        head_accuracy: 0.0,
        head_subset_accuracy: vec![],
        fused_nme_accuracy: 0.0,
        surgery_head_accuracy: None,
        param_count: 0,
        size_ratio: 0.0,
        prune: None,
        joint: StageTelemetry::default(),
        finetune: None,
        memory_size: 0,
        train_checksum: String::new(),
        test_checksum: String::new(),
        probes: vec![],
    }
}
