use serde::{Deserialize, Serialize};

use super::report::RoundReport;
use crate::error::{Error, Result};

pub fn overall_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::arg("accuracy of an empty set"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `A[t][k]`: accuracy after round `t + 1` on the classes of round `k + 1`.
pub fn subset_accuracy_curves(reports: &[RoundReport]) -> Vec<Vec<f64>> {
    reports.iter().map(|r| r.subset_accuracy.clone()).collect()
}

/// Mean of the per-round accuracies, leaving out the first round.
pub fn mean_accuracy(per_round: &[f64]) -> Result<f64> {
    if per_round.len() < 2 {
        return Err(Error::arg("mean accuracy needs at least two rounds"));
    }
    let rest = &per_round[1..];
    Ok(rest.iter().sum::<f64>() / rest.len() as f64)
}

pub fn size_ratio_series(reports: &[RoundReport], base_param_count: usize) -> Result<Vec<f64>> {
    if base_param_count == 0 {
        return Err(Error::arg("base parameter count must be positive"));
    }
    Ok(reports
        .iter()
        .map(|r| r.param_count as f64 / base_param_count as f64)
        .collect())
}

/// Size-weighted mean of a report's subset accuracies.
pub fn weighted_subset_accuracy(report: &RoundReport) -> f64 {
    let n: usize = report.subset_sizes.iter().sum();
    report
        .subset_accuracy
        .iter()
        .zip(&report.subset_sizes)
        .map(|(&a, &s)| a * s as f64)
        .sum::<f64>()
        / n as f64
}

/// A value observed once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; absent with fewer than two seeds.
    pub std: Option<f64>,
}

impl SeedStat {
    pub fn from_values(per_seed: Vec<f64>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::arg("no per-seed values"));
        }
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = (per_seed.len() >= 2)
            .then(|| (per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Ok(SeedStat { per_seed, mean, std })
    }
}

/// Seed-aggregated results of one ablation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub row: String,
    pub seeds: Vec<u64>,
    /// NME accuracy after the last round.
    pub final_accuracy: SeedStat,
    /// Over rounds `2..=T`. Absent for probe rows and single-round runs.
    pub mean_accuracy: Option<SeedStat>,
    /// Entry `k` covers the classes of round `k + 1`, after the last round.
    pub final_subset_accuracy: Vec<SeedStat>,
    pub final_head_accuracy: SeedStat,
    pub final_size_ratio: Option<SeedStat>,
    pub note: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(round: usize, acc: Vec<f64>, sizes: Vec<usize>, params: usize) -> RoundReport {
        let n: usize = sizes.iter().sum();
        let overall = acc.iter().zip(&sizes).map(|(a, &s)| a * s as f64).sum::<f64>() / n as f64;
        RoundReport {
            accuracy: overall,
            subset_accuracy: acc.clone(),
            subset_sizes: sizes,
            head_accuracy: overall,
            head_subset_accuracy: acc,
            fused_nme_accuracy: overall,
            param_count: params,
            ..crate::evalkit::report::blank_report(round)
        }
    }

    #[test]
    fn overall_accuracy_cases() {
        assert_eq!(overall_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&[0, 0], &[1, 2]).unwrap(), 0.0);
        assert_eq!(overall_accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(matches!(overall_accuracy(&[], &[]), Err(Error::InvalidArgument(_))));
        assert!(overall_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn mean_accuracy_cases() {
        assert!((mean_accuracy(&[80.0, 70.0, 60.0]).unwrap() - 65.0).abs() < 1e-12);
        assert_eq!(mean_accuracy(&[0.4; 5]).unwrap(), 0.4);
        assert_eq!(mean_accuracy(&[0.9, 0.7]).unwrap(), 0.7);
        assert!(matches!(mean_accuracy(&[0.9]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn curves_and_ratios() {
        let reps = vec![
            report(1, vec![0.9], vec![100], 1000),
            report(2, vec![0.6, 0.8], vec![100, 100], 2000),
            report(3, vec![0.5, 0.7, 0.9], vec![100, 100, 100], 3000),
        ];
        let a = subset_accuracy_curves(&reps);
        assert_eq!(a.len(), 3);
        assert_eq!(a[1][1], 0.8);
        assert_eq!(a[2].len(), 3);
        assert_eq!(subset_accuracy_curves(&reps[..1]), vec![vec![0.9]]);
        assert_eq!(size_ratio_series(&reps, 1000).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(size_ratio_series(&reps, 0).is_err());
        for r in &reps {
            assert!((weighted_subset_accuracy(r) - r.accuracy).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_stats() {
        let one = SeedStat::from_values(vec![0.5]).unwrap();
        assert_eq!(one.std, None);
        let s = SeedStat::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(SeedStat::from_values(vec![]).is_err());
    }
}
