use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::evalkit::StageTelemetry;
use crate::losses::{cross_entropy_grad, multi_teacher_distillation_loss_grad, LossBreakdown};
use crate::nets::{AuxModel, FusionClassifier, TrainConfig};
use crate::optim::Adam;
use crate::rng::Rng;
use crate::stream::ImageShape;
use crate::tensor::Matrix;

const CHUNK: usize = 256;
const PLATEAU_TOLERANCE: f64 = 1e-4;

/// Applies `f` to consecutive row blocks of `inputs` and stacks the results.
pub(crate) fn map_chunks(inputs: &Matrix, f: impl Fn(&Matrix) -> Result<Matrix>) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = 0;
    let mut start = 0;
    while start < inputs.rows {
        let end = (start + CHUNK).min(inputs.rows);
        let rows: Vec<usize> = (start..end).collect();
        let out = f(&inputs.select_rows(&rows))?;
        cols = out.cols;
        data.extend(out.data);
        start = end;
    }
    Matrix::from_vec(inputs.rows, cols, data)
}

/// Mirrors each image (channel-first rows of `shape`) left to right.
pub(crate) fn flip_row(row: &mut [f64], shape: ImageShape) {
    for line in row.chunks_mut(shape.width) {
        line.reverse();
    }
}

/// Loss of one batch and its gradient for every trainable parameter, in the
/// order of [`FusionClassifier::trainable_params_mut`].
///
/// With a fused head the objective is `fused_ce + lambda2 * (aux_ce + lambda1 * distill)`;
/// without one it is `aux_ce + lambda1 * distill`. `teacher_logits` holds one
/// matrix per teacher (the distillation term is their mean); empty means no
/// distillation. `cached`, when given, replaces the frozen old extractors' features.
pub fn loss_and_grads(
    model: &FusionClassifier,
    batch: &Matrix,
    targets: &[usize],
    teacher_logits: &[Matrix],
    cached: Option<&[Matrix]>,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    let (out, trace) = model.forward_train(batch, cached)?;
    let (aux_ce, mut d_aux) = cross_entropy_grad(&out.aux_logits, targets)?;
    let distill = if teacher_logits.is_empty() {
        0.0
    } else {
        let (l, g) = multi_teacher_distillation_loss_grad(teacher_logits, &out.aux_logits, cfg.temperature)?;
        d_aux.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += cfg.lambda1 * b);
        l
    };
    let (loss, d_fused) = match &out.fused_logits {
        Some(fused) => {
            let (fused_ce, d_fused) = cross_entropy_grad(fused, targets)?;
            d_aux.scale(cfg.lambda2);
            (
                LossBreakdown::fused(fused_ce, aux_ce, distill, cfg.lambda1, cfg.lambda2),
                Some(d_fused),
            )
        }
        None => (LossBreakdown::single(aux_ce, distill, cfg.lambda1), None),
    };
    let grads = model.backward(&trace, d_fused.as_ref(), &d_aux)?.into_flat();
    Ok((loss, grads))
}

/// Training set of one stage, with frozen-feature and teacher caches.
pub(crate) struct StageData<'a> {
    pub inputs: &'a Matrix,
    pub targets: &'a [usize],
    pub shape: ImageShape,
}

fn accumulate(sum: &mut LossBreakdown, l: &LossBreakdown, w: f64) {
    sum.distill += w * l.distill;
    sum.aux_ce += w * l.aux_ce;
    sum.aux += w * l.aux;
    sum.fused_ce += w * l.fused_ce;
    sum.total += w * l.total;
}

/// Adam with shuffled mini-batches until `max_epochs` or a training-loss
/// plateau of `cfg.patience` epochs. Frozen parameters are never touched.
pub(crate) fn fit(
    model: &mut FusionClassifier,
    data: &StageData<'_>,
    teachers: &[&AuxModel],
    cfg: &TrainConfig,
    max_epochs: usize,
    rng: &mut Rng,
) -> Result<StageTelemetry> {
    let n = data.inputs.rows;
    if n == 0 {
        return Err(Error::arg("no training examples"));
    }
    if data.targets.len() != n {
        return Err(Error::arg("targets and inputs differ in length"));
    }
    let frozen_old = model.old.iter().all(|b| b.extractor.frozen);
    let (cached, teacher_cache) = if cfg.augment_flip {
        (None, None)
    } else {
        let cached = if frozen_old && !model.old.is_empty() {
            Some(
                model
                    .old
                    .iter()
                    .map(|b| map_chunks(data.inputs, |x| b.extractor.extract_features(x)))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let teach = teachers
            .iter()
            .map(|t| map_chunks(data.inputs, |x| t.logits(x)))
            .collect::<Result<Vec<_>>>()?;
        (cached, Some(teach))
    };

    let mut opt = Adam::new(cfg.learning_rate);
    if let Some(mask_lr) = cfg.mask_learning_rate {
        let rates = model
            .trainable_mask_flags()
            .into_iter()
            .map(|is_mask| if is_mask { mask_lr } else { cfg.learning_rate })
            .collect();
        opt = opt.with_rates(rates);
    }
    let mut telemetry = StageTelemetry::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..max_epochs {
        order.shuffle(rng);
        let mut sum = LossBreakdown::default();
        for idx in order.chunks(cfg.batch_size) {
            let mut batch = data.inputs.select_rows(idx);
            let targets: Vec<usize> = idx.iter().map(|&i| data.targets[i]).collect();
            if cfg.augment_flip {
                for r in 0..batch.rows {
                    if rng.random_bool(0.5) {
                        flip_row(batch.row_mut(r), data.shape);
                    }
                }
            }
            let batch_cached: Option<Vec<Matrix>> = cached.as_ref().map(|c| c.iter().map(|f| f.select_rows(idx)).collect());
            let teacher_logits: Vec<Matrix> = match &teacher_cache {
                Some(t) => t.iter().map(|l| l.select_rows(idx)).collect(),
                None => teachers.iter().map(|t| t.logits(&batch)).collect::<Result<_>>()?,
            };
            let (loss, grads) = loss_and_grads(model, &batch, &targets, &teacher_logits, batch_cached.as_deref(), cfg)?;
            if !loss.total.is_finite() {
                return Err(Error::state("training loss diverged"));
            }
            opt.step(&mut model.trainable_params_mut(), &grads)?;
            accumulate(&mut sum, &loss, idx.len() as f64 / n as f64);
            telemetry.steps += 1;
        }
        telemetry.epochs_run += 1;
        telemetry.epoch_losses.push(sum);
        if !best.is_finite() || sum.total < best - PLATEAU_TOLERANCE * best.abs().max(1.0) {
            best = sum.total;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(telemetry)
}
