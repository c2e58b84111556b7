//! The fused classifier of one round: frozen earlier extractors and the current
//! trainable extractor, each followed by a transform into a common space, a
//! fused head over the combined features and an auxiliary head on the current
//! extractor alone.

use serde::{Deserialize, Serialize};

use super::config::FusionMode;
use super::extractor::{ExtractorGrads, ExtractorTrace, MaskedFeatureExtractor};
use super::linear::{Linear, LinearGrads};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Round (0-based) whose training produced this extractor.
    pub round: usize,
    pub extractor: MaskedFeatureExtractor,
    pub transform: Option<Linear>,
}

impl Branch {
    pub fn feature_dim(&self) -> usize {
        self.transform.as_ref().map_or(self.extractor.output_dim(), |t| t.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.extractor.param_count() + self.transform.as_ref().map_or(0, Linear::param_count)
    }
}

/// Extractor plus its own classifier head: the auxiliary model of one round,
/// later reused as the distillation teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxModel {
    pub extractor: MaskedFeatureExtractor,
    pub head: Linear,
}

impl AuxModel {
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.head.forward(&self.extractor.extract_features(batch)?)
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim
    }
}

/// How a round's classifier is put together.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionLayout {
    pub transforms: bool,
    pub common_dim: usize,
    pub fusion: FusionMode,
    /// `false` builds a plain single-extractor classifier (aux head only).
    pub fused_head: bool,
    pub freeze_old: bool,
    pub freeze_old_transforms: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionClassifier {
    pub old: Vec<Branch>,
    pub current: Branch,
    pub fusion: FusionMode,
    pub fused_head: Option<Linear>,
    pub aux_head: Linear,
    pub freeze_old_transforms: bool,
}

/// Assembles the classifier for a round with `old_classes + new_classes` outputs.
///
/// A previous fused head is grown (old weights kept) rather than replaced; a
/// previous aux head is grown only when the extractor carries over.
#[allow(clippy::too_many_arguments)]
pub fn build_fusion_model(
    mut old: Vec<Branch>,
    new_extractor: MaskedFeatureExtractor,
    round: usize,
    layout: &FusionLayout,
    old_classes: usize,
    new_classes: usize,
    previous_fused_head: Option<&Linear>,
    previous_aux_head: Option<&Linear>,
    rng: &mut Rng,
) -> Result<FusionClassifier> {
    if new_classes == 0 {
        return Err(Error::arg("a round must add at least one class"));
    }
    if !layout.fused_head && !old.is_empty() {
        return Err(Error::arg("old extractors require a fused head"));
    }
    for b in &mut old {
        match (&b.transform, layout.transforms) {
            (Some(t), true) if t.out_dim != layout.common_dim => {
                return Err(Error::arg(format!(
                    "transform of round {} maps to {} dims, expected {}",
                    b.round, t.out_dim, layout.common_dim
                )));
            }
            (Some(t), true) if t.in_dim != b.extractor.output_dim() => {
                return Err(Error::arg(format!("transform of round {} does not match its extractor", b.round)));
            }
            (None, true) => return Err(Error::arg(format!("round {} extractor lacks a transform", b.round))),
            (Some(_), false) => return Err(Error::arg(format!("round {} has an unexpected transform", b.round))),
            _ => {}
        }
        b.extractor.frozen = layout.freeze_old;
    }
    let total = old_classes + new_classes;
    let transform = layout
        .transforms
        .then(|| Linear::new(new_extractor.output_dim(), layout.common_dim, rng));
    let current = Branch {
        round,
        extractor: new_extractor,
        transform,
    };
    if layout.fusion == FusionMode::Average {
        let d = current.feature_dim();
        if old.iter().any(|b| b.feature_dim() != d) {
            return Err(Error::arg("average fusion needs equal feature dimensions"));
        }
    }
    let fused_dim = match layout.fusion {
        FusionMode::Concatenate => old.iter().map(Branch::feature_dim).sum::<usize>() + current.feature_dim(),
        FusionMode::Average => current.feature_dim(),
    };
    let fused_head = if layout.fused_head {
        Some(match previous_fused_head {
            Some(h) => h.grown(fused_dim, total, rng)?,
            None => Linear::new(fused_dim, total, rng),
        })
    } else {
        None
    };
    let aux_dim = current.extractor.output_dim();
    let aux_head = match previous_aux_head {
        Some(h) if h.in_dim == aux_dim => h.grown(aux_dim, total, rng)?,
        Some(_) => return Err(Error::arg("previous aux head does not fit the extractor")),
        None => Linear::new(aux_dim, total, rng),
    };
    Ok(FusionClassifier {
        old,
        current,
        fusion: layout.fusion,
        fused_head,
        aux_head,
        freeze_old_transforms: layout.freeze_old_transforms,
    })
}

/// Forward values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ModelTrace {
    features: Vec<Matrix>,
    extractor_traces: Vec<Option<ExtractorTrace>>,
    transformed: Vec<Matrix>,
    fused: Matrix,
}

#[derive(Debug, Clone)]
pub struct ModelOutputs {
    pub fused_logits: Option<Matrix>,
    pub aux_logits: Matrix,
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    extractors: Vec<Option<ExtractorGrads>>,
    transforms: Vec<Option<LinearGrads>>,
    fused_head: Option<LinearGrads>,
    aux_head: LinearGrads,
}

impl ModelGrads {
    /// Same order as [`FusionClassifier::trainable_params_mut`].
    pub fn into_flat(self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (e, t) in self.extractors.into_iter().zip(self.transforms) {
            if let Some(e) = e {
                out.extend(e.into_flat());
            }
            if let Some(t) = t {
                out.extend(t.into_flat());
            }
        }
        if let Some(h) = self.fused_head {
            out.extend(h.into_flat());
        }
        out.extend(self.aux_head.into_flat());
        out
    }
}

impl FusionClassifier {
    pub fn num_classes(&self) -> usize {
        self.aux_head.out_dim
    }

    pub fn branches(&self) -> impl Iterator<Item = &Branch> {
        self.old.iter().chain(std::iter::once(&self.current))
    }

    pub fn branch_count(&self) -> usize {
        self.old.len() + 1
    }

    fn transform_trainable(&self, i: usize) -> bool {
        i == self.old.len() || !self.freeze_old_transforms
    }

    pub fn fused_dim(&self) -> usize {
        match self.fusion {
            FusionMode::Concatenate => self.branches().map(Branch::feature_dim).sum(),
            FusionMode::Average => self.current.feature_dim(),
        }
    }

    /// Parameters used at inference: extractors, transforms and the fused head
    /// (the aux head stands in when there is no fused head).
    pub fn param_count(&self) -> usize {
        let head = self
            .fused_head
            .as_ref()
            .map_or(self.aux_head.param_count(), Linear::param_count);
        self.branches().map(Branch::param_count).sum::<usize>() + head
    }

    pub fn aux_model(&self) -> AuxModel {
        let mut extractor = self.current.extractor.clone();
        extractor.freeze();
        AuxModel {
            extractor,
            head: self.aux_head.clone(),
        }
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let n_old = self.old.len();
        let freeze_t = self.freeze_old_transforms;
        let mut out = Vec::new();
        for (i, b) in self.old.iter_mut().chain(std::iter::once(&mut self.current)).enumerate() {
            if !b.extractor.frozen {
                out.extend(b.extractor.params_mut());
            }
            if let Some(t) = &mut b.transform {
                if i == n_old || !freeze_t {
                    out.extend(t.params_mut());
                }
            }
        }
        if let Some(h) = &mut self.fused_head {
            out.extend(h.params_mut());
        }
        out.extend(self.aux_head.params_mut());
        out
    }

    /// For each tensor of [`Self::trainable_params_mut`], whether it holds mask logits.
    pub fn trainable_mask_flags(&self) -> Vec<bool> {
        let n_old = self.old.len();
        let mut out = Vec::new();
        for (i, b) in self.branches().enumerate() {
            if !b.extractor.frozen {
                out.extend(b.extractor.mask_param_flags());
            }
            if b.transform.is_some() && (i == n_old || !self.freeze_old_transforms) {
                out.extend([false, false]);
            }
        }
        if self.fused_head.is_some() {
            out.extend([false, false]);
        }
        out.extend([false, false]);
        out
    }

    pub fn trainable_param_count(&mut self) -> usize {
        self.trainable_params_mut().iter().map(|p| p.len()).sum()
    }

    fn fuse(&self, transformed: &[Matrix]) -> Result<Matrix> {
        match self.fusion {
            FusionMode::Concatenate => Matrix::hconcat(transformed),
            FusionMode::Average => {
                let mut out = transformed[0].clone();
                for t in &transformed[1..] {
                    if t.cols != out.cols {
                        return Err(Error::arg("average fusion needs equal feature dimensions"));
                    }
                    out.data.iter_mut().zip(&t.data).for_each(|(a, b)| *a += b);
                }
                out.scale(1.0 / transformed.len() as f64);
                Ok(out)
            }
        }
    }

    fn branch_features(&self, batch: &Matrix, include: &[bool]) -> Result<Vec<Matrix>> {
        self.branches()
            .zip(include)
            .filter(|(_, &keep)| keep)
            .map(|(b, _)| {
                let f = b.extractor.extract_features(batch)?;
                match &b.transform {
                    Some(t) => t.forward(&f),
                    None => Ok(f),
                }
            })
            .collect()
    }

    /// Combined (transformed) features of the chosen branches; this is the space
    /// the fused head and nearest-mean classification operate in.
    pub fn embed_subset(&self, batch: &Matrix, include: &[bool]) -> Result<Matrix> {
        if include.len() != self.branch_count() || !include.iter().any(|&k| k) {
            return Err(Error::arg("branch selection must name every branch and keep one"));
        }
        self.fuse(&self.branch_features(batch, include)?)
    }

    /// Pooled outputs of the chosen extractors, concatenated, before any transform.
    pub fn extractor_features_subset(&self, batch: &Matrix, include: &[bool]) -> Result<Matrix> {
        if include.len() != self.branch_count() || !include.iter().any(|&k| k) {
            return Err(Error::arg("branch selection must name every branch and keep one"));
        }
        let f = self
            .branches()
            .zip(include)
            .filter(|(_, &keep)| keep)
            .map(|(b, _)| b.extractor.extract_features(batch))
            .collect::<Result<Vec<_>>>()?;
        Matrix::hconcat(&f)
    }

    pub fn embed(&self, batch: &Matrix) -> Result<Matrix> {
        self.embed_subset(batch, &vec![true; self.branch_count()])
    }

    pub fn fused_logits(&self, batch: &Matrix) -> Result<Matrix> {
        let head = self
            .fused_head
            .as_ref()
            .ok_or_else(|| Error::state("single-extractor classifier has no fused head"))?;
        head.forward(&self.embed(batch)?)
    }

    /// Logits of the auxiliary classifier; touches only the current extractor.
    pub fn aux_logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.aux_head.forward(&self.current.extractor.extract_features(batch)?)
    }

    /// Logits of whichever head serves inference.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        if self.fused_head.is_some() {
            self.fused_logits(batch)
        } else {
            self.aux_logits(batch)
        }
    }

    /// Training forward pass. `frozen_features[i]`, when given, replaces running
    /// old extractor `i` (it must be frozen).
    pub fn forward_train(&self, batch: &Matrix, frozen_features: Option<&[Matrix]>) -> Result<(ModelOutputs, ModelTrace)> {
        let mut features = Vec::with_capacity(self.branch_count());
        let mut traces = Vec::with_capacity(self.branch_count());
        for (i, b) in self.branches().enumerate() {
            let cached = frozen_features.filter(|_| i < self.old.len()).map(|f| &f[i]);
            match cached {
                Some(f) if b.extractor.frozen => {
                    if f.rows != batch.rows || f.cols != b.extractor.output_dim() {
                        return Err(Error::arg("cached features do not match the batch"));
                    }
                    features.push(f.clone());
                    traces.push(None);
                }
                Some(_) => return Err(Error::state("cached features supplied for a trainable extractor")),
                None if b.extractor.frozen => {
                    features.push(b.extractor.extract_features(batch)?);
                    traces.push(None);
                }
                None => {
                    let (f, t) = b.extractor.forward_train(batch)?;
                    features.push(f);
                    traces.push(Some(t));
                }
            }
        }
        let transformed = self
            .branches()
            .zip(&features)
            .map(|(b, f)| match &b.transform {
                Some(t) => t.forward(f),
                None => Ok(f.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        let fused = self.fuse(&transformed)?;
        let fused_logits = self.fused_head.as_ref().map(|h| h.forward(&fused)).transpose()?;
        let aux_logits = self.aux_head.forward(features.last().expect("current branch"))?;
        Ok((
            ModelOutputs {
                fused_logits,
                aux_logits,
            },
            ModelTrace {
                features,
                extractor_traces: traces,
                transformed,
                fused,
            },
        ))
    }

    pub fn backward(&self, trace: &ModelTrace, d_fused_logits: Option<&Matrix>, d_aux_logits: &Matrix) -> Result<ModelGrads> {
        let nb = self.branch_count();
        let cur = nb - 1;
        let mut d_transformed: Vec<Option<Matrix>> = vec![None; nb];
        let fused_head = match (&self.fused_head, d_fused_logits) {
            (Some(head), Some(d)) => {
                let (g, d_fused) = head.backward(&trace.fused, d, true);
                let d_fused = d_fused.expect("input gradient requested");
                match self.fusion {
                    FusionMode::Concatenate => {
                        let mut off = 0;
                        for (i, t) in trace.transformed.iter().enumerate() {
                            let cols: Vec<usize> = (off..off + t.cols).collect();
                            d_transformed[i] = Some(d_fused.select_cols(&cols));
                            off += t.cols;
                        }
                    }
                    FusionMode::Average => {
                        let mut share = d_fused;
                        share.scale(1.0 / nb as f64);
                        d_transformed.iter_mut().for_each(|d| *d = Some(share.clone()));
                    }
                }
                Some(g)
            }
            (None, None) => None,
            _ => return Err(Error::state("fused-head gradient does not match the model")),
        };

        let mut transforms = Vec::with_capacity(nb);
        let mut d_features: Vec<Option<Matrix>> = Vec::with_capacity(nb);
        for (i, b) in self.branches().enumerate() {
            let needs_input = !b.extractor.frozen;
            match (&b.transform, d_transformed[i].take()) {
                (Some(t), Some(d)) => {
                    let (g, d_in) = t.backward(&trace.features[i], &d, needs_input);
                    transforms.push(self.transform_trainable(i).then_some(g));
                    d_features.push(d_in);
                }
                (Some(t), None) => {
                    let zero = Matrix::zeros(trace.features[i].rows, t.out_dim);
                    let (g, _) = t.backward(&trace.features[i], &zero, false);
                    transforms.push(self.transform_trainable(i).then_some(g));
                    d_features.push(None);
                }
                (None, d) => {
                    transforms.push(None);
                    d_features.push(d.filter(|_| needs_input));
                }
            }
        }

        let (aux_grads, d_aux_in) = self.aux_head.backward(&trace.features[cur], d_aux_logits, !self.current.extractor.frozen);
        if let Some(d) = d_aux_in {
            match &mut d_features[cur] {
                Some(acc) => acc.data.iter_mut().zip(&d.data).for_each(|(a, b)| *a += b),
                slot => *slot = Some(d),
            }
        }

        let mut extractors = Vec::with_capacity(nb);
        for (i, b) in self.branches().enumerate() {
            if b.extractor.frozen {
                extractors.push(None);
                continue;
            }
            let trace_i = trace.extractor_traces[i]
                .as_ref()
                .ok_or_else(|| Error::state("missing trace for trainable extractor"))?;
            let d = d_features[i]
                .take()
                .unwrap_or_else(|| Matrix::zeros(trace.features[i].rows, b.extractor.output_dim()));
            extractors.push(Some(b.extractor.backward(trace_i, &d)));
        }
        Ok(ModelGrads {
            extractors,
            transforms,
            fused_head,
            aux_head: aux_grads,
        })
    }
}
