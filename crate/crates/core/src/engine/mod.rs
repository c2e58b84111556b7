//! The per-round procedure: grow, train jointly, prune, fine-tune, freeze,
//! hand over the teacher, update memory; plus nearest-mean inference.

mod method;
mod nme;
mod state;
mod trainer;

pub use method::MethodFlags;
pub use nme::{class_mean, nearest_mean, nme_classify};
pub use state::{Evaluation, Phase, Probe, SystemState};
pub use trainer::loss_and_grads;
