use super::dataset::LabeledExample;
use super::herding::herding_select;
use crate::error::{Error, Result};

/// Candidates for one newly introduced class, with the features herding runs on.
#[derive(Debug, Clone)]
pub struct ClassCandidates {
    pub label: usize,
    pub examples: Vec<LabeledExample>,
    pub features: Vec<Vec<f64>>,
}

/// Fixed-budget exemplar store. Each class keeps its exemplars in herding order,
/// and shrinking a class only ever drops a suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarMemory {
    budget: usize,
    classes: Vec<(usize, Vec<LabeledExample>)>,
}

impl ExemplarMemory {
    pub fn new(budget: usize) -> Self {
        ExemplarMemory {
            budget,
            classes: Vec::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.iter().map(|(l, _)| *l)
    }

    pub fn exemplars(&self, label: usize) -> Option<&[LabeledExample]> {
        self.classes
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, v)| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledExample> {
        self.classes.iter().flat_map(|(_, v)| v.iter())
    }

    /// Per-class quota `floor(budget / total_classes)`; existing classes are
    /// truncated to that prefix and new classes filled by herding.
    pub fn update(&mut self, new_classes: Vec<ClassCandidates>, total_classes: usize) -> Result<()> {
        if total_classes == 0 {
            return Err(Error::arg("total class count must be positive"));
        }
        let quota = self.budget / total_classes;
        if quota == 0 {
            return Err(Error::state(format!(
                "budget {} cannot hold one exemplar for each of {total_classes} classes",
                self.budget
            )));
        }
        for c in &new_classes {
            if self.exemplars(c.label).is_some() {
                return Err(Error::arg(format!("class {} already stored", c.label)));
            }
            if c.examples.len() != c.features.len() {
                return Err(Error::arg("candidate examples and features differ in length"));
            }
            if c.examples.iter().any(|e| e.label != c.label) {
                return Err(Error::arg(format!("candidate for class {} carries another label", c.label)));
            }
        }
        for (_, list) in &mut self.classes {
            list.truncate(quota);
        }
        for c in new_classes {
            if c.examples.is_empty() {
                return Err(Error::arg(format!("class {} has no candidates", c.label)));
            }
            let k = quota.min(c.examples.len());
            let order = herding_select(&c.features, k)?;
            let picked = order.into_iter().map(|i| c.examples[i].clone()).collect();
            self.classes.push((c.label, picked));
        }
        Ok(())
    }
}
