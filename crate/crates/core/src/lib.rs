//! Class-incremental learning that keeps every earlier round's (pruned, frozen)
//! feature extractor inside the classifier, fuses their transformed features
//! with a newly trained extractor, distils from the previous round's auxiliary
//! model and classifies by nearest mean of exemplars.

pub mod engine;
pub mod error;
pub mod evalkit;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod pruning;
pub mod rng;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
