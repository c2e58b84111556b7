//! Per-round checkpoint directories.
//!
//! * `params.bin`: named tensors. `b"CLPT"`, `u32` tensor count, then per tensor
//!   a `u16` name length, UTF-8 name, `u8` rank, `u32` dims and little-endian
//!   `f32` values. All integers are little-endian.
//! * `masks.json`: binary kernel masks of the round's extractor, one bit string
//!   per layer name.
//! * `manifest.json`: extractor lineage and the tensor inventory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fusion::{Branch, FusionClassifier};
use super::linear::Linear;
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"CLPT";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    /// Position of the extractor in the fused model.
    pub branch: usize,
    /// 1-based round that trained the extractor.
    pub trained_in_round: usize,
    pub frozen: bool,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub round: usize,
    pub num_classes: usize,
    pub lineage: Vec<LineageEntry>,
    pub tensors: Vec<String>,
    pub files: Vec<String>,
}

fn push_linear(out: &mut Vec<NamedTensor>, prefix: &str, l: &Linear) {
    out.push(NamedTensor {
        name: format!("{prefix}.weight"),
        shape: vec![l.out_dim, l.in_dim],
        values: l.weight.iter().map(|&v| v as f32).collect(),
    });
    out.push(NamedTensor {
        name: format!("{prefix}.bias"),
        shape: vec![l.out_dim],
        values: l.bias.iter().map(|&v| v as f32).collect(),
    });
}

fn push_branch(out: &mut Vec<NamedTensor>, idx: usize, b: &Branch) {
    for l in &b.extractor.layers {
        let k = l.kernel_size;
        out.push(NamedTensor {
            name: format!("branch{idx}.{}.weight", l.name),
            shape: vec![l.out_channels, l.in_channels, k, k],
            values: l.weight.iter().map(|&v| v as f32).collect(),
        });
        if let Some(bias) = &l.bias {
            out.push(NamedTensor {
                name: format!("branch{idx}.{}.bias", l.name),
                shape: vec![l.out_channels],
                values: bias.iter().map(|&v| v as f32).collect(),
            });
        }
        if let Some(e) = &l.mask_logits {
            out.push(NamedTensor {
                name: format!("branch{idx}.{}.mask_logits", l.name),
                shape: vec![l.out_channels],
                values: e.iter().map(|&v| v as f32).collect(),
            });
        }
    }
    if let Some(t) = &b.transform {
        push_linear(out, &format!("branch{idx}.transform"), t);
    }
}

pub fn model_tensors(model: &FusionClassifier) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    for (i, b) in model.branches().enumerate() {
        push_branch(&mut out, i, b);
    }
    if let Some(h) = &model.fused_head {
        push_linear(&mut out, "fused_head", h);
    }
    push_linear(&mut out, "aux_head", &model.aux_head);
    out
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.values.len() {
            return Err(Error::arg(format!("tensor {} shape does not match its values", t.name)));
        }
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::arg("tensor name too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(u8::try_from(t.shape.len()).map_err(|_| Error::arg("tensor rank too large"))?);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    struct Cursor<'a> {
        bytes: &'a [u8],
        at: usize,
    }
    impl Cursor<'_> {
        fn take(&mut self, n: usize) -> Result<&[u8]> {
            if self.bytes.len() < self.at + n {
                return Err(Error::Format {
                    offset: self.bytes.len() as u64,
                    message: format!("truncated tensor file: needed {n} bytes at {}", self.at),
                });
            }
            let s = &self.bytes[self.at..self.at + n];
            self.at += n;
            Ok(s)
        }
        fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
        }
    }
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)? != TENSOR_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad tensor magic".into(),
        });
    }
    let count = c.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(c.take(2)?.try_into().expect("2 bytes")) as usize;
        let at = c.at;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::Format {
            offset: at as u64,
            message: "tensor name is not UTF-8".into(),
        })?;
        let rank = c.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(4 * n)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        out.push(NamedTensor { name, shape, values });
    }
    Ok(out)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))
}

/// Writes one round's checkpoint. `masks` maps layer names to kept-kernel bits.
pub fn save_checkpoint(
    dir: &Path,
    round: usize,
    model: &FusionClassifier,
    masks: &BTreeMap<String, Vec<bool>>,
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = model_tensors(model);
    write(&dir.join("params.bin"), &encode_tensors(&tensors)?)?;
    let bits: BTreeMap<&String, String> = masks
        .iter()
        .map(|(k, v)| (k, v.iter().map(|&b| if b { '1' } else { '0' }).collect()))
        .collect();
    write(&dir.join("masks.json"), to_json(&bits)?.as_bytes())?;
    let manifest = CheckpointManifest {
        round,
        num_classes: model.num_classes(),
        lineage: model
            .branches()
            .enumerate()
            .map(|(i, b)| LineageEntry {
                branch: i,
                trained_in_round: b.round + 1,
                frozen: b.extractor.frozen,
                param_count: b.param_count(),
            })
            .collect(),
        tensors: tensors.iter().map(|t| t.name.clone()).collect(),
        files: vec!["params.bin".into(), "masks.json".into(), "manifest.json".into()],
    };
    write(&dir.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, Vec<NamedTensor>, BTreeMap<String, String>)> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let manifest = serde_json::from_slice(&read("manifest.json")?).map_err(|e| Error::Serde(e.to_string()))?;
    let tensors = decode_tensors(&read("params.bin")?)?;
    let masks = serde_json::from_slice(&read("masks.json")?).map_err(|e| Error::Serde(e.to_string()))?;
    Ok((manifest, tensors, masks))
}
