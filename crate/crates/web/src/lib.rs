//! Three small views over the library for the browser page in `www/`.
//!
//! Each view is a plain Rust function returning a serializable struct; the
//! `wasm_bindgen` exports wrap them and hand JSON text to JavaScript.

use cilfuse::engine::{class_mean, nme_classify};
use cilfuse::losses::{distillation_loss, softmax};
use cilfuse::nets::mask_values;
use cilfuse::stream::herding_select;
use cilfuse::tensor::Matrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskView {
    pub mask: Vec<f64>,
    /// `n * mask`: the factor each channel is multiplied by during training.
    pub channel_scale: Vec<f64>,
    pub threshold: f64,
    pub keep: Vec<bool>,
    pub kept: usize,
}

/// Soft mask of one layer and the kernels that survive binarization at
/// threshold `scale / n`.
pub fn mask_view(logits: &[f64], scale: f64) -> Result<MaskView, String> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(format!("threshold scale must be positive, got {scale}"));
    }
    let mask = mask_values(logits).map_err(|e| e.to_string())?;
    let n = mask.len() as f64;
    let threshold = scale / n;
    let keep: Vec<bool> = mask.iter().map(|&m| m >= threshold).collect();
    Ok(MaskView {
        channel_scale: mask.iter().map(|m| m * n).collect(),
        kept: keep.iter().filter(|&&k| k).count(),
        threshold,
        keep,
        mask,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistillPoint {
    pub temperature: f64,
    pub loss: f64,
    pub teacher: Vec<f64>,
    pub student: Vec<f64>,
}

/// Distillation loss between one teacher and one student logit vector at
/// each temperature, with both softened distributions.
pub fn distillation_sweep(teacher: &[f64], student: &[f64], temperatures: &[f64]) -> Result<Vec<DistillPoint>, String> {
    if teacher.is_empty() || teacher.len() != student.len() {
        return Err(format!("need equal non-empty logits, got {} and {}", teacher.len(), student.len()));
    }
    let t = Matrix::from_rows(&[teacher.to_vec()]).map_err(|e| e.to_string())?;
    let s = Matrix::from_rows(&[student.to_vec()]).map_err(|e| e.to_string())?;
    temperatures
        .iter()
        .map(|&temp| {
            Ok(DistillPoint {
                temperature: temp,
                loss: distillation_loss(&t, &s, teacher.len(), temp).map_err(|e| e.to_string())?,
                teacher: softmax(teacher, temp),
                student: softmax(student, temp),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HerdingView {
    /// Point indices chosen per class, in herding order.
    pub exemplars: Vec<Vec<usize>>,
    /// Mean of all points of each class.
    pub class_means: Vec<Vec<f64>>,
    /// Normalized mean of each class's exemplars, as used by NME.
    pub exemplar_means: Vec<Vec<f64>>,
    /// NME label of every grid cell, row-major from `(x0, y0)`.
    pub grid: Vec<usize>,
    /// Fraction of all points that NME over the exemplars labels correctly.
    pub accuracy: f64,
}

/// Herds `per_class` exemplars from each class of 2-D points and labels a
/// `cells x cells` grid spanning `[x0, x1] x [y0, y1]` by nearest exemplar mean.
#[allow(clippy::too_many_arguments)]
pub fn herding_view(
    xy: &[f64],
    labels: &[usize],
    per_class: usize,
    cells: usize,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) -> Result<HerdingView, String> {
    if xy.len() != 2 * labels.len() {
        return Err(format!("{} coordinates for {} labels", xy.len(), labels.len()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let points: Vec<Vec<f64>> = xy.chunks(2).map(<[f64]>::to_vec).collect();
    let mut exemplars = Vec::with_capacity(classes);
    let mut class_means = Vec::with_capacity(classes);
    let mut exemplar_mats = Vec::with_capacity(classes);
    for c in 0..classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            return Err(format!("class {c} has no points"));
        }
        let feats: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
        let chosen = herding_select(&feats, per_class.min(feats.len())).map_err(|e| e.to_string())?;
        let n = feats.len() as f64;
        class_means.push((0..2).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / n).collect());
        let rows: Vec<Vec<f64>> = chosen.iter().map(|&k| feats[k].clone()).collect();
        exemplar_mats.push(Matrix::from_rows(&rows).map_err(|e| e.to_string())?);
        exemplars.push(chosen.iter().map(|&k| idx[k]).collect());
    }
    let exemplar_means = exemplar_mats
        .iter()
        .map(|m| class_mean(m).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut grid = Vec::new();
    if cells > 0 && classes > 0 {
        let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / cells as f64;
        let centres: Vec<Vec<f64>> = (0..cells * cells)
            .map(|k| vec![step(x0, x1, k % cells), step(y0, y1, k / cells)])
            .collect();
        grid = nme_classify(&exemplar_mats, &Matrix::from_rows(&centres).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    }
    let accuracy = if points.is_empty() {
        0.0
    } else {
        let pred = nme_classify(&exemplar_mats, &Matrix::from_rows(&points).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / points.len() as f64
    };
    Ok(HerdingView {
        exemplars,
        class_means,
        exemplar_means,
        grid,
        accuracy,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = maskView)]
pub fn mask_view_js(logits: &[f64], scale: f64) -> Result<String, JsError> {
    to_js(mask_view(logits, scale))
}

#[wasm_bindgen(js_name = distillationSweep)]
pub fn distillation_sweep_js(teacher: &[f64], student: &[f64], temperatures: &[f64]) -> Result<String, JsError> {
    to_js(distillation_sweep(teacher, student, temperatures))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = herdingView)]
pub fn herding_view_js(
    xy: &[f64],
    labels: &[u32],
    per_class: usize,
    cells: usize,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) -> Result<String, JsError> {
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    to_js(herding_view(xy, &labels, per_class, cells, x0, x1, y0, y1))
}
