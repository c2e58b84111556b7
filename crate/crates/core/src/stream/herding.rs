use crate::error::{Error, Result};
use crate::tensor::squared_distance;

const TIE_TOLERANCE: f64 = 1e-9;

/// Greedy herding: step `s` picks the unchosen candidate that brings the running
/// mean of chosen features closest to the class mean. Ties go to the lower index.
pub fn herding_select(features: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = features.len();
    if n == 0 {
        return Err(Error::arg("herding needs at least one candidate"));
    }
    if k == 0 || k > n {
        return Err(Error::arg(format!("herding k={k} outside 1..={n}")));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::arg("herding candidates differ in dimension"));
    }
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut chosen = vec![false; n];
    let mut running = vec![0.0; dim];
    let mut order = Vec::with_capacity(k);
    let mut candidate = vec![0.0; dim];
    for step in 1..=k {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in features.iter().enumerate() {
            if chosen[i] {
                continue;
            }
            for ((c, r), v) in candidate.iter_mut().zip(&running).zip(f) {
                *c = (r + v) / step as f64;
            }
            let d = squared_distance(&mean, &candidate);
            if best.is_none_or(|(_, bd)| d < bd - TIE_TOLERANCE * bd.max(f64::MIN_POSITIVE)) {
                best = Some((i, d));
            }
        }
        let (pick, _) = best.expect("an unchosen candidate remains while step <= n");
        chosen[pick] = true;
        for (r, v) in running.iter_mut().zip(&features[pick]) {
            *r += v;
        }
        order.push(pick);
    }
    Ok(order)
}
