//! Class-incremental data streaming: datasets, class orders, rounds and the
//! exemplar memory.

mod dataset;
mod herding;
mod memory;
mod order;
mod packed;
mod synthetic;

pub use dataset::{Dataset, ImageShape, LabeledExample};
pub use herding::herding_select;
pub use memory::{ClassCandidates, ExemplarMemory};
pub use order::{make_class_order, split_rounds, ClassOrder, OrderSeed, TaskStream};
pub use packed::{decode_packed, encode_packed, read_packed_dataset, write_packed_dataset, PACKED_MAGIC};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use dataset::examples_checksum;
