use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// `Natural` keeps classes in label order; `Seeded` shuffles reproducibly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSeed {
    Natural,
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOrder {
    pub permutation: Vec<usize>,
    pub seed: OrderSeed,
}

pub fn make_class_order(num_classes: usize, seed: OrderSeed) -> Result<ClassOrder> {
    if num_classes == 0 {
        return Err(Error::arg("class order needs at least one class"));
    }
    let mut permutation: Vec<usize> = (0..num_classes).collect();
    if let OrderSeed::Seeded(s) = seed {
        permutation.shuffle(&mut derive_rng(s, "class-order", 0));
    }
    Ok(ClassOrder { permutation, seed })
}

/// Classes partitioned into rounds along a fixed order.
///
/// The logit index of a class is its position in the order, so round `t`
/// owns logits `[offset(t), offset(t) + size(t))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStream {
    pub order: ClassOrder,
    pub round_sizes: Vec<usize>,
}

pub fn split_rounds(order: ClassOrder, round_sizes: &[usize]) -> Result<TaskStream> {
    if round_sizes.is_empty() {
        return Err(Error::arg("need at least one round"));
    }
    if round_sizes.contains(&0) {
        return Err(Error::arg("round sizes must be positive"));
    }
    let total: usize = round_sizes.iter().sum();
    if total > order.permutation.len() {
        return Err(Error::arg(format!(
            "round sizes sum to {total} but only {} classes exist",
            order.permutation.len()
        )));
    }
    Ok(TaskStream {
        order,
        round_sizes: round_sizes.to_vec(),
    })
}

impl TaskStream {
    pub fn num_rounds(&self) -> usize {
        self.round_sizes.len()
    }

    /// Number of classes introduced before round `t` (0-based).
    pub fn offset(&self, t: usize) -> usize {
        self.round_sizes[..t].iter().sum()
    }

    pub fn round_classes(&self, t: usize) -> &[usize] {
        let start = self.offset(t);
        &self.order.permutation[start..start + self.round_sizes[t]]
    }

    /// All classes seen up to and including round `t`, in logit order.
    pub fn seen_classes(&self, t: usize) -> &[usize] {
        &self.order.permutation[..self.offset(t + 1)]
    }

    pub fn logit_index(&self, label: usize) -> Option<usize> {
        let seen = self.offset(self.num_rounds());
        self.order.permutation[..seen].iter().position(|&c| c == label)
    }

    /// Round in which `label` is introduced.
    pub fn round_of(&self, label: usize) -> Option<usize> {
        let idx = self.logit_index(label)?;
        let mut acc = 0;
        self.round_sizes.iter().position(|&s| {
            acc += s;
            idx < acc
        })
    }

    pub fn round_train<'a>(&'a self, data: &'a Dataset, t: usize) -> Vec<&'a LabeledExample> {
        data.of_classes(self.round_classes(t)).collect()
    }

    pub fn seen_test<'a>(&'a self, data: &'a Dataset, t: usize) -> Vec<&'a LabeledExample> {
        data.of_classes(self.seen_classes(t)).collect()
    }
}
