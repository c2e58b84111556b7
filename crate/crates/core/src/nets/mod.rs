//! Masked convolutional extractors, transforms and the fused classifier.

pub mod checkpoint;
mod config;
mod conv;
mod extractor;
mod fusion;
mod linear;

pub use config::{FusionMode, NmeFeatures, TrainConfig};
pub use conv::{mask_logit_grad, mask_values, ConvGrads, MaskGain, MaskedConvLayer};
pub use extractor::{ExtractorGrads, ExtractorSpec, ExtractorTrace, MaskedFeatureExtractor};
pub use fusion::{
    build_fusion_model, AuxModel, Branch, FusionClassifier, FusionLayout, ModelGrads, ModelOutputs, ModelTrace,
};
pub use linear::{Linear, LinearGrads};

#[cfg(test)]
mod fusion_tests;
