//! The desk-scale benchmark: 10 synthetic classes in 5 rounds of 2, 5 seeds.

use super::suite::{AblationRow, SuitePlan};
use crate::nets::{ExtractorSpec, TrainConfig};
use crate::stream::SyntheticSpec;

pub const DESK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// 200 training and 50 test images of 8x8x3 per class.
pub fn desk_dataset() -> SyntheticSpec {
    SyntheticSpec::default()
}

pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 60,
        finetune_max_epochs: 30,
        patience: 5,
        mask_learning_rate: Some(0.01),
        common_dim: 64,
        extractor: ExtractorSpec::default(),
        ..TrainConfig::default()
    }
}

/// Exemplar memory of 4% of the training set.
pub const DESK_MEMORY_BUDGET: usize = 80;

pub fn desk_plan(rows: Vec<AblationRow>) -> SuitePlan {
    SuitePlan {
        round_sizes: vec![2; 5],
        seeds: DESK_SEEDS.to_vec(),
        train: desk_train_config(),
        memory_budget: DESK_MEMORY_BUDGET,
        rows,
    }
}
