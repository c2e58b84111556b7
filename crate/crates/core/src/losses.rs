//! Classification and distillation losses, each with its gradient w.r.t. logits.
//!
//! All batch losses are means over rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|z| (z - max) / temperature).collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    shifted.into_iter().map(|s| s - lse).collect()
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(Error::arg(format!("temperature must be finite and >= 1, got {t}")));
    }
    Ok(())
}

/// Distillation from a teacher over the first `old_classes` logits, with both
/// softmaxes restricted to that block. Returns the loss and its gradient
/// w.r.t. the student logits (zero outside the old block).
pub fn distillation_loss_grad(
    teacher: &Matrix,
    student: &Matrix,
    old_classes: usize,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    if old_classes == 0 {
        return Err(Error::arg("distillation needs at least one old class"));
    }
    check_temperature(temperature)?;
    if teacher.cols != old_classes {
        return Err(Error::arg(format!(
            "teacher has {} logits, expected {old_classes}",
            teacher.cols
        )));
    }
    if student.cols < old_classes || student.rows != teacher.rows {
        return Err(Error::arg("student logits do not cover the teacher's classes"));
    }
    if student.rows == 0 {
        return Err(Error::arg("empty batch"));
    }
    let n = student.rows as f64;
    let mut grad = Matrix::zeros(student.rows, student.cols);
    let mut loss = 0.0;
    for i in 0..student.rows {
        let p = softmax(teacher.row(i), temperature);
        let s = &student.row(i)[..old_classes];
        let log_q = log_softmax(s, temperature);
        loss -= p.iter().zip(&log_q).map(|(pj, lq)| pj * lq).sum::<f64>();
        let g = grad.row_mut(i);
        for j in 0..old_classes {
            g[j] = (log_q[j].exp() - p[j]) / (temperature * n);
        }
    }
    Ok((loss / n, grad))
}

pub fn distillation_loss(teacher: &Matrix, student: &Matrix, old_classes: usize, temperature: f64) -> Result<f64> {
    distillation_loss_grad(teacher, student, old_classes, temperature).map(|(l, _)| l)
}

/// Temperature-1 cross-entropy against integer targets, with its logit gradient.
pub fn cross_entropy_grad(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows != targets.len() {
        return Err(Error::arg("logit rows and target count differ"));
    }
    if logits.rows == 0 {
        return Err(Error::arg("empty batch"));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= logits.cols) {
        return Err(Error::arg(format!("target {bad} outside {} classes", logits.cols)));
    }
    let n = logits.rows as f64;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let mut loss = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        let log_p = log_softmax(logits.row(i), 1.0);
        loss -= log_p[y];
        let g = grad.row_mut(i);
        for (k, lp) in log_p.iter().enumerate() {
            g[k] = lp.exp() / n;
        }
        g[y] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}

/// Cross-entropy against one-hot label rows.
pub fn cross_entropy(logits: &Matrix, one_hot: &Matrix) -> Result<f64> {
    if one_hot.rows != logits.rows || one_hot.cols != logits.cols {
        return Err(Error::arg("label matrix shape differs from logits"));
    }
    let targets = one_hot
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::arg(format!("label row {i} is not one-hot")));
            }
            Ok(row.iter().position(|&v| v == 1.0).expect("one entry is 1"))
        })
        .collect::<Result<Vec<_>>>()?;
    cross_entropy_grad(logits, &targets).map(|(l, _)| l)
}

pub fn combined_aux_loss(cross_entropy: f64, distillation: f64, lambda1: f64) -> f64 {
    cross_entropy + lambda1 * distillation
}

pub fn total_loss(fused: f64, aux: f64, lambda2: f64) -> f64 {
    fused + lambda2 * aux
}

/// Mean of per-teacher distillation terms; teacher `k` covers student logits
/// `[0, u_k)` with `u_k` its own logit count. Returns the loss and gradient.
pub fn multi_teacher_distillation_loss_grad(
    teachers: &[Matrix],
    student: &Matrix,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    if teachers.is_empty() {
        return Err(Error::arg("multi-teacher distillation needs at least one teacher"));
    }
    if teachers.windows(2).any(|w| w[0].cols >= w[1].cols) {
        return Err(Error::arg("teacher logit blocks must be strictly increasing"));
    }
    let k = teachers.len() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(student.rows, student.cols);
    for teacher in teachers {
        let (l, g) = distillation_loss_grad(teacher, student, teacher.cols, temperature)?;
        total += l;
        for (a, b) in grad.data.iter_mut().zip(&g.data) {
            *a += b / k;
        }
    }
    Ok((total / k, grad))
}

pub fn multi_teacher_distillation_loss(teachers: &[Matrix], student: &Matrix, temperature: f64) -> Result<f64> {
    multi_teacher_distillation_loss_grad(teachers, student, temperature).map(|(l, _)| l)
}

/// The loss terms of one optimization step.
///
/// `aux = aux_ce + lambda1 * distill` and `total = fused_ce + lambda2 * aux`.
/// Single-model training has no fused term, so there `total = aux`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub distill: f64,
    pub aux_ce: f64,
    pub aux: f64,
    pub fused_ce: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn fused(fused_ce: f64, aux_ce: f64, distill: f64, lambda1: f64, lambda2: f64) -> Self {
        let aux = combined_aux_loss(aux_ce, distill, lambda1);
        LossBreakdown {
            distill,
            aux_ce,
            aux,
            fused_ce,
            total: total_loss(fused_ce, aux, lambda2),
        }
    }

    pub fn single(aux_ce: f64, distill: f64, lambda1: f64) -> Self {
        let aux = combined_aux_loss(aux_ce, distill, lambda1);
        LossBreakdown {
            distill,
            aux_ce,
            aux,
            fused_ce: 0.0,
            total: aux,
        }
    }
}
