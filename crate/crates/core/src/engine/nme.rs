use crate::error::{Error, Result};
use crate::tensor::{normalize_in_place, squared_distance, Matrix};

/// Class mean of length-normalised exemplar features, itself normalised.
pub fn class_mean(features: &Matrix) -> Result<Vec<f64>> {
    if features.rows == 0 {
        return Err(Error::state("class has no exemplars"));
    }
    let mut mean = vec![0.0; features.cols];
    for row in features.iter_rows() {
        let mut f = row.to_vec();
        normalize_in_place(&mut f);
        mean.iter_mut().zip(&f).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= features.rows as f64);
    normalize_in_place(&mut mean);
    Ok(mean)
}

/// Index of the nearest class mean for each normalised query row; ties go to
/// the smaller index.
pub fn nearest_mean(means: &[Vec<f64>], queries: &Matrix) -> Result<Vec<usize>> {
    if means.is_empty() {
        return Err(Error::state("no class means"));
    }
    if means.iter().any(|m| m.len() != queries.cols) {
        return Err(Error::arg("class mean and feature dimensions differ"));
    }
    Ok(queries
        .iter_rows()
        .map(|row| {
            let mut q = row.to_vec();
            normalize_in_place(&mut q);
            let mut best = (0, f64::INFINITY);
            for (k, m) in means.iter().enumerate() {
                let d = squared_distance(&q, m);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect())
}

/// Nearest-mean-of-exemplars classification in a feature space.
///
/// `exemplar_features[k]` holds the features of class `k`'s exemplars; returns a
/// class index per query row.
pub fn nme_classify(exemplar_features: &[Matrix], queries: &Matrix) -> Result<Vec<usize>> {
    let means = exemplar_features.iter().map(class_mean).collect::<Result<Vec<_>>>()?;
    nearest_mean(&means, queries)
}
