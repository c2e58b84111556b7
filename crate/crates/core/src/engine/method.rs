use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::FusionMode;

/// Which parts of the method a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodFlags {
    /// Keep earlier extractors in the classifier. Off: one extractor is carried
    /// through all rounds and trained with distillation.
    pub fusion: bool,
    /// Per-extractor linear transforms into a common space.
    pub transforms: bool,
    /// Kernel masks, pruning and fine-tuning of each new extractor.
    pub masks: bool,
    /// Let earlier extractors keep training.
    pub unfrozen: bool,
    /// Single-model training that distils from every earlier model at once.
    pub multi_teacher: bool,
}

impl Default for MethodFlags {
    fn default() -> Self {
        MethodFlags::full()
    }
}

impl MethodFlags {
    pub fn none() -> Self {
        MethodFlags {
            fusion: false,
            transforms: false,
            masks: false,
            unfrozen: false,
            multi_teacher: false,
        }
    }

    pub fn fusion_only() -> Self {
        MethodFlags {
            fusion: true,
            ..MethodFlags::none()
        }
    }

    pub fn fusion_fc() -> Self {
        MethodFlags {
            transforms: true,
            ..MethodFlags::fusion_only()
        }
    }

    pub fn full() -> Self {
        MethodFlags {
            masks: true,
            ..MethodFlags::fusion_fc()
        }
    }

    pub fn unfrozen() -> Self {
        MethodFlags {
            unfrozen: true,
            ..MethodFlags::full()
        }
    }

    pub fn multi_teacher() -> Self {
        MethodFlags {
            multi_teacher: true,
            ..MethodFlags::none()
        }
    }

    pub fn validate(&self, fusion_mode: FusionMode) -> Result<()> {
        if !self.fusion {
            let extra = [
                (self.transforms, "transforms"),
                (self.masks, "masks"),
                (self.unfrozen, "unfrozen"),
            ];
            if let Some((_, name)) = extra.iter().find(|(on, _)| *on) {
                return Err(Error::config(format!("{name} requires fusion")));
            }
        } else if self.multi_teacher {
            return Err(Error::config("multi_teacher is a single-model mode and conflicts with fusion"));
        }
        if self.fusion && self.masks && !self.transforms && fusion_mode == FusionMode::Average {
            return Err(Error::config(
                "average fusion of raw features needs equal widths, which pruning breaks; enable transforms",
            ));
        }
        Ok(())
    }
}
