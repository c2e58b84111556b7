use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One image with its class label. Pixels are row-major, channel-last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub pixels: Vec<u8>,
    pub label: usize,
}

impl LabeledExample {
    /// Channel-first floats in `[-1, 1]`, the layout the extractors consume.
    pub fn to_input(&self, shape: ImageShape, flip: bool) -> Vec<f64> {
        let ImageShape {
            height,
            width,
            channels,
        } = shape;
        let mut out = vec![0.0; shape.len()];
        for y in 0..height {
            for x in 0..width {
                let sx = if flip { width - 1 - x } else { x };
                for c in 0..channels {
                    let p = self.pixels[(y * width + sx) * channels + c];
                    out[(c * height + y) * width + x] = f64::from(p) / 127.5 - 1.0;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub shape: ImageShape,
    pub num_classes: usize,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(shape: ImageShape, num_classes: usize, examples: Vec<LabeledExample>) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.pixels.len() != shape.len() {
                return Err(Error::arg(format!(
                    "example {i} has {} pixels, expected {}",
                    ex.pixels.len(),
                    shape.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(Error::arg(format!(
                    "example {i} label {} outside {num_classes} classes",
                    ex.label
                )));
            }
        }
        Ok(Dataset {
            shape,
            num_classes,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn of_classes<'a>(&'a self, classes: &'a [usize]) -> impl Iterator<Item = &'a LabeledExample> + 'a {
        self.examples.iter().filter(move |e| classes.contains(&e.label))
    }
}

/// SHA-256 over labels and pixels, in order.
pub fn examples_checksum<'a>(examples: impl IntoIterator<Item = &'a LabeledExample>) -> String {
    let mut h = Sha256::new();
    for ex in examples {
        h.update((ex.label as u64).to_le_bytes());
        h.update(&ex.pixels);
    }
    hex::encode(h.finalize())
}
