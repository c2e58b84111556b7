//! Packed binary dataset files.
//!
//! Layout: `b"CLIS"`, then little-endian `u32` example count, height, width and
//! channels, then one record per example: a little-endian `u16` label followed
//! by `height * width * channels` pixel bytes (row-major, channel-last).

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, ImageShape, LabeledExample};
use crate::error::{Error, Result};

pub const PACKED_MAGIC: &[u8; 4] = b"CLIS";
const HEADER_LEN: usize = 4 + 4 * 4;

pub fn encode_packed(dataset: &Dataset) -> Result<Vec<u8>> {
    let count = u32::try_from(dataset.len()).map_err(|_| Error::arg("too many examples"))?;
    let dims = [dataset.shape.height, dataset.shape.width, dataset.shape.channels];
    let mut out = Vec::with_capacity(HEADER_LEN + dataset.len() * (2 + dataset.shape.len()));
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::arg("image dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for ex in &dataset.examples {
        let label = u16::try_from(ex.label).map_err(|_| Error::arg("label exceeds u16"))?;
        out.extend_from_slice(&label.to_le_bytes());
        out.extend_from_slice(&ex.pixels);
    }
    Ok(out)
}

pub fn decode_packed(bytes: &[u8]) -> Result<Dataset> {
    let truncated = |offset: usize, what: &str| Error::Format {
        offset: offset as u64,
        message: format!("truncated file: expected {what}"),
    };
    if bytes.len() < 4 {
        return Err(truncated(bytes.len(), "magic"));
    }
    if &bytes[..4] != PACKED_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {:?}", &bytes[..4]),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(bytes.len(), "header"));
    }
    let field = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize
    };
    let count = field(0);
    let shape = ImageShape {
        height: field(1),
        width: field(2),
        channels: field(3),
    };
    let record = 2 + shape.len();
    let mut examples = Vec::with_capacity(count.min(bytes.len() / record.max(1)));
    let mut at = HEADER_LEN;
    let mut num_classes = 0;
    for i in 0..count {
        if bytes.len() < at + record {
            return Err(truncated(bytes.len(), &format!("record {i} of {count}")));
        }
        let label = usize::from(u16::from_le_bytes([bytes[at], bytes[at + 1]]));
        num_classes = num_classes.max(label + 1);
        examples.push(LabeledExample {
            pixels: bytes[at + 2..at + record].to_vec(),
            label,
        });
        at += record;
    }
    if at != bytes.len() {
        return Err(Error::Format {
            offset: at as u64,
            message: format!("{} trailing bytes after {count} records", bytes.len() - at),
        });
    }
    Dataset::new(shape, num_classes, examples)
}

pub fn read_packed_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_packed(&bytes)
}

pub fn write_packed_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_packed(dataset)?).map_err(|e| Error::io(path, e))
}
