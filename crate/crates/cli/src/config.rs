//! Run configuration files.
//!
//! ```toml
//! round_sizes = [2, 2, 2, 2, 2]
//! seeds = [0, 1, 2, 3, 4]
//! memory_budget = 200
//!
//! [dataset]
//! kind = "synthetic"        # or "packed" with `train` and `test` paths
//! num_classes = 10
//!
//! [train]                   # any TrainConfig field; omitted fields keep defaults
//! max_epochs = 60
//!
//! [flags]                   # `run` only; defaults to the full method
//! masks = true
//!
//! [[rows]]                  # `ablate` only; defaults to the standard matrix
//! name = "none"
//! flags = { fusion = false, transforms = false, masks = false }
//! ```
//!
//! Unknown keys are errors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cilfuse::engine::MethodFlags;
use cilfuse::evalkit::{AblationRow, SuitePlan};
use cilfuse::nets::TrainConfig;
use cilfuse::stream::{generate_synthetic, read_packed_dataset, Dataset, SyntheticSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Packed { train: PathBuf, test: PathBuf },
}

impl DatasetSource {
    /// Relative packed paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSource::Synthetic(spec) => Ok(generate_synthetic(spec)?),
            DatasetSource::Packed { train, test } => {
                let read = |p: &PathBuf| {
                    let p = base.join(p);
                    read_packed_dataset(&p).with_context(|| format!("reading {}", p.display()))
                };
                let (train, test) = (read(train)?, read(test)?);
                if train.shape != test.shape || train.num_classes != test.num_classes {
                    bail!("train and test files disagree on image shape or class count");
                }
                Ok((train, test))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub round_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub memory_budget: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub flags: MethodFlags,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<AblationRow>,
    /// Root under which run directories are created.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// The ablation rows, falling back to the standard matrix probing round 1.
    pub fn ablation_rows(&self) -> Vec<AblationRow> {
        if self.rows.is_empty() {
            AblationRow::standard_matrix(1)
        } else {
            self.rows.clone()
        }
    }

    /// A one-row plan for `run`, or the full table for `ablate`.
    pub fn plan(&self, ablate: bool) -> SuitePlan {
        let rows = if ablate {
            self.ablation_rows()
        } else {
            vec![AblationRow::trained(&self.run_id(), self.flags)]
        };
        SuitePlan {
            round_sizes: self.round_sizes.clone(),
            seeds: self.seeds.clone(),
            train: self.train.clone(),
            memory_budget: self.memory_budget,
            rows,
        }
    }

    pub fn validate(&self, ablate: bool) -> Result<()> {
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            if self.round_sizes.iter().sum::<usize>() > spec.num_classes {
                bail!("round sizes need more classes than the dataset has");
            }
        }
        self.plan(ablate).validate()?;
        Ok(())
    }

    /// Name of the single-row run: the preset the flags match, else `custom`.
    pub fn run_id(&self) -> String {
        let presets = [
            ("none", MethodFlags::none()),
            ("fusion", MethodFlags::fusion_only()),
            ("fusion_fc", MethodFlags::fusion_fc()),
            ("full", MethodFlags::full()),
            ("unfrozen", MethodFlags::unfrozen()),
            ("multi_teacher", MethodFlags::multi_teacher()),
        ];
        presets
            .iter()
            .find(|(_, f)| *f == self.flags)
            .map_or("custom", |(n, _)| n)
            .to_string()
    }

    /// SHA-256 of the config as JSON with sorted keys, ignoring `output_dir`.
    pub fn canonical_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        let value = serde_json::to_value(&c)?;
        let text = serde_json::to_string(&value)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}
