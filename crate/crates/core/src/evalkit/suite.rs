use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{mean_accuracy, RunSummary, SeedStat};
use super::report::{ProbeKind, ProbeReport, RoundReport};
use crate::engine::{MethodFlags, Probe, SystemState};
use crate::error::{Error, Result};
use crate::nets::TrainConfig;
use crate::stream::{make_class_order, split_rounds, Dataset, OrderSeed, TaskStream};

/// An inference-time probe of another row's trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    /// Name of the trained row to probe.
    pub of: String,
    pub kind: ProbeKind,
    /// 1-based round of the targeted extractor.
    pub extractor: usize,
}

/// One line of the ablation table: either a trained configuration or a probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<MethodFlags>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
}

impl AblationRow {
    pub fn trained(name: &str, flags: MethodFlags) -> Self {
        AblationRow {
            name: name.into(),
            flags: Some(flags),
            probe: None,
        }
    }

    pub fn probe(name: &str, of: &str, kind: ProbeKind, extractor: usize) -> Self {
        AblationRow {
            name: name.into(),
            flags: None,
            probe: Some(ProbeSpec {
                of: of.into(),
                kind,
                extractor,
            }),
        }
    }

    /// none, fusion, fusion+FC, full, unfrozen, drop/keep-only probes of the
    /// round-`k` extractor and the multi-teacher single model.
    pub fn standard_matrix(k: usize) -> Vec<AblationRow> {
        vec![
            AblationRow::trained("none", MethodFlags::none()),
            AblationRow::trained("fusion", MethodFlags::fusion_only()),
            AblationRow::trained("fusion_fc", MethodFlags::fusion_fc()),
            AblationRow::trained("full", MethodFlags::full()),
            AblationRow::trained("unfrozen", MethodFlags::unfrozen()),
            AblationRow::probe(&format!("drop_{k}"), "full", ProbeKind::Drop, k),
            AblationRow::probe(&format!("keep_only_{k}"), "full", ProbeKind::KeepOnly, k),
            AblationRow::trained("multi_teacher", MethodFlags::multi_teacher()),
        ]
    }
}

/// Everything an ablation suite needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuitePlan {
    pub round_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub memory_budget: usize,
    pub rows: Vec<AblationRow>,
}

impl SuitePlan {
    /// Checks names, flag combinations and probe targets.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("no seeds"));
        }
        if self.rows.is_empty() {
            return Err(Error::config("no ablation rows"));
        }
        if self.round_sizes.is_empty() || self.round_sizes.contains(&0) {
            return Err(Error::config("round sizes must be a non-empty list of positive counts"));
        }
        self.train.validate()?;
        let mut names = BTreeMap::new();
        for row in &self.rows {
            if row.name.is_empty() || !row.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-+.".contains(c)) {
                return Err(Error::config(format!("row name {:?} must be non-empty [A-Za-z0-9_+.-]", row.name)));
            }
            if names.insert(row.name.as_str(), row).is_some() {
                return Err(Error::config(format!("duplicate row name {:?}", row.name)));
            }
        }
        for row in &self.rows {
            match (&row.flags, &row.probe) {
                (Some(flags), None) => flags
                    .validate(self.train.fusion)
                    .map_err(|e| Error::config(format!("row {}: {e}", row.name)))?,
                (None, Some(p)) => {
                    let base = names
                        .get(p.of.as_str())
                        .ok_or_else(|| Error::config(format!("row {} probes unknown row {:?}", row.name, p.of)))?;
                    match base.flags {
                        Some(f) if f.fusion => {}
                        _ => {
                            return Err(Error::config(format!(
                                "row {} must probe a trained fusion row",
                                row.name
                            )))
                        }
                    }
                    if p.extractor == 0 || p.extractor >= self.round_sizes.len() {
                        return Err(Error::config(format!(
                            "row {}: extractor {} is not an earlier round of a {}-round run",
                            row.name,
                            p.extractor,
                            self.round_sizes.len()
                        )));
                    }
                }
                _ => {
                    return Err(Error::config(format!(
                        "row {} needs exactly one of flags and probe",
                        row.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn stream(&self, num_classes: usize, seed: u64) -> Result<TaskStream> {
        split_rounds(make_class_order(num_classes, OrderSeed::Seeded(seed))?, &self.round_sizes)
    }

    fn probes_of(&self, row: &str) -> Vec<Probe> {
        let mut out: Vec<Probe> = self
            .rows
            .iter()
            .filter_map(|r| r.probe.as_ref())
            .filter(|p| p.of == row)
            .map(|p| Probe {
                kind: p.kind,
                extractor: p.extractor,
            })
            .collect();
        out.dedup();
        out
    }
}

/// Reports of one trained row under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub row: String,
    pub seed: u64,
    pub class_order: Vec<usize>,
    pub reports: Vec<RoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub runs: Vec<RunRecord>,
    /// In row order.
    pub summaries: Vec<RunSummary>,
}

/// Runs every round of one configuration. `on_round` sees the state after
/// each finished round, e.g. to write a checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn run_continual(
    train: &Dataset,
    test: &Dataset,
    stream: &TaskStream,
    flags: MethodFlags,
    config: &TrainConfig,
    memory_budget: usize,
    seed: u64,
    probes: &[Probe],
    mut on_round: impl FnMut(&SystemState, &RoundReport) -> Result<()>,
) -> Result<Vec<RoundReport>> {
    let mut state = SystemState::new(flags, config.clone(), memory_budget, train.shape, seed)?;
    let mut reports = Vec::with_capacity(stream.num_rounds());
    for t in 0..stream.num_rounds() {
        let report = state.run_round(train, test, stream.round_classes(t), probes)?;
        on_round(&state, &report)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Trains every flag row for every seed, evaluates probe rows on the trained
/// models they name and aggregates over seeds. All rows share the class order
/// of each seed; differing stream checksums are reported as an error.
pub fn run_ablation_suite(
    train: &Dataset,
    test: &Dataset,
    plan: &SuitePlan,
    mut on_run: impl FnMut(&RunRecord),
) -> Result<SuiteResult> {
    plan.validate()?;
    let mut runs = Vec::new();
    for row in plan.rows.iter().filter(|r| r.flags.is_some()) {
        let flags = row.flags.expect("trained row");
        let probes = plan.probes_of(&row.name);
        for &seed in &plan.seeds {
            let stream = plan.stream(train.num_classes, seed)?;
            let reports = run_continual(
                train,
                test,
                &stream,
                flags,
                &plan.train,
                plan.memory_budget,
                seed,
                &probes,
                |_, _| Ok(()),
            )?;
            let record = RunRecord {
                row: row.name.clone(),
                seed,
                class_order: stream.order.permutation.clone(),
                reports,
            };
            on_run(&record);
            runs.push(record);
        }
    }
    check_streams(&runs)?;
    let summaries = plan
        .rows
        .iter()
        .map(|row| summarize(row, &plan.seeds, &runs))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult { runs, summaries })
}

fn check_streams(runs: &[RunRecord]) -> Result<()> {
    let mut seen: BTreeMap<(u64, usize), (&str, &str, &str)> = BTreeMap::new();
    for run in runs {
        for r in &run.reports {
            let key = (run.seed, r.round);
            let val = (run.row.as_str(), r.train_checksum.as_str(), r.test_checksum.as_str());
            if let Some(prev) = seen.get(&key) {
                if (prev.1, prev.2) != (val.1, val.2) {
                    return Err(Error::state(format!(
                        "rows {} and {} saw different data in round {} of seed {}",
                        prev.0, val.0, r.round, run.seed
                    )));
                }
            } else {
                seen.insert(key, val);
            }
        }
    }
    Ok(())
}

fn stat_columns(per_seed: &[Vec<f64>]) -> Result<Vec<SeedStat>> {
    let width = per_seed.first().map_or(0, Vec::len);
    (0..width)
        .map(|k| SeedStat::from_values(per_seed.iter().map(|v| v[k]).collect()))
        .collect()
}

/// Seed aggregate of one row. Probe rows read the probe results recorded in
/// the final round of the trained row they name.
pub fn summarize(row: &AblationRow, seeds: &[u64], runs: &[RunRecord]) -> Result<RunSummary> {
    let of = row.probe.as_ref().map_or(row.name.as_str(), |p| p.of.as_str());
    let mine: Vec<&RunRecord> = seeds
        .iter()
        .map(|&s| {
            runs.iter()
                .find(|r| r.row == of && r.seed == s)
                .ok_or_else(|| Error::state(format!("no run of row {of} for seed {s}")))
        })
        .collect::<Result<_>>()?;
    let last = |r: &&RunRecord| r.reports.last().cloned().ok_or_else(|| Error::state("empty run"));
    match &row.probe {
        None => {
            let finals: Vec<RoundReport> = mine.iter().map(last).collect::<Result<_>>()?;
            let means = mine
                .iter()
                .map(|r| mean_accuracy(&r.reports.iter().map(|x| x.accuracy).collect::<Vec<_>>()).ok())
                .collect::<Option<Vec<f64>>>();
            Ok(RunSummary {
                row: row.name.clone(),
                seeds: seeds.to_vec(),
                final_accuracy: SeedStat::from_values(finals.iter().map(|r| r.accuracy).collect())?,
                mean_accuracy: means.map(SeedStat::from_values).transpose()?,
                final_subset_accuracy: stat_columns(
                    &finals.iter().map(|r| r.subset_accuracy.clone()).collect::<Vec<_>>(),
                )?,
                final_head_accuracy: SeedStat::from_values(finals.iter().map(|r| r.head_accuracy).collect())?,
                final_size_ratio: Some(SeedStat::from_values(finals.iter().map(|r| r.size_ratio).collect())?),
                note: None,
            })
        }
        Some(p) => {
            let probes: Vec<ProbeReport> = mine
                .iter()
                .map(|r| {
                    last(r)?
                        .probes
                        .into_iter()
                        .find(|x| x.kind == p.kind && x.extractor == p.extractor)
                        .ok_or_else(|| Error::state(format!("row {} has no probe result", row.name)))
                })
                .collect::<Result<_>>()?;
            Ok(RunSummary {
                row: row.name.clone(),
                seeds: seeds.to_vec(),
                final_accuracy: SeedStat::from_values(probes.iter().map(|r| r.accuracy).collect())?,
                mean_accuracy: None,
                final_subset_accuracy: stat_columns(
                    &probes.iter().map(|r| r.subset_accuracy.clone()).collect::<Vec<_>>(),
                )?,
                final_head_accuracy: SeedStat::from_values(probes.iter().map(|r| r.head_accuracy).collect())?,
                final_size_ratio: None,
                note: Some(format!(
                    "inference-time probe of the trained {of} model: class means recomputed and fused head re-fit on exemplars only"
                )),
            })
        }
    }
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub round: usize,
    pub metric: String,
    /// 1-based introduction round for per-subset metrics.
    pub subset: Option<usize>,
    pub value: f64,
}

pub const METRICS_HEADER: &str = "run_id,seed,round,metric,subset,value";

fn push_probe_rows(out: &mut Vec<MetricRow>, run_id: &str, seed: u64, round: usize, p: &ProbeReport) {
    let row = |metric: &str, subset, value| MetricRow {
        run_id: run_id.into(),
        seed,
        round,
        metric: metric.into(),
        subset,
        value,
    };
    out.push(row("accuracy", None, p.accuracy));
    out.push(row("head_accuracy", None, p.head_accuracy));
    for (k, &a) in p.subset_accuracy.iter().enumerate() {
        out.push(row("subset_accuracy", Some(k + 1), a));
    }
}

/// Flattens trained runs (and, via `probe_rows`, their probes) into metric rows.
pub fn metric_rows(runs: &[RunRecord], probe_rows: &[AblationRow]) -> Vec<MetricRow> {
    let mut out = Vec::new();
    for run in runs {
        for r in &run.reports {
            let row = |metric: &str, subset, value| MetricRow {
                run_id: run.row.clone(),
                seed: run.seed,
                round: r.round,
                metric: metric.into(),
                subset,
                value,
            };
            out.push(row("accuracy", None, r.accuracy));
            out.push(row("head_accuracy", None, r.head_accuracy));
            out.push(row("fused_nme_accuracy", None, r.fused_nme_accuracy));
            for (k, &a) in r.subset_accuracy.iter().enumerate() {
                out.push(row("subset_accuracy", Some(k + 1), a));
            }
            out.push(row("param_count", None, r.param_count as f64));
            out.push(row("size_ratio", None, r.size_ratio));
            out.push(row("memory_size", None, r.memory_size as f64));
            if let Some(p) = &r.prune {
                out.push(row("kept_fraction", None, p.kept_fraction));
            }
            for pr in probe_rows {
                let Some(spec) = &pr.probe else { continue };
                if spec.of != run.row {
                    continue;
                }
                if let Some(p) = r.probes.iter().find(|x| x.kind == spec.kind && x.extractor == spec.extractor) {
                    push_probe_rows(&mut out, &pr.name, run.seed, r.round, p);
                }
            }
        }
    }
    out
}

pub fn format_metrics_csv(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(',')).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::arg(format!("metrics header: {e}")))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(Error::arg(format!("metrics file must start with {METRICS_HEADER:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::arg(format!("metrics file: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ExtractorSpec;
    use crate::stream::{generate_synthetic, SyntheticSpec};

    fn plan(rows: Vec<AblationRow>) -> SuitePlan {
        SuitePlan {
            round_sizes: vec![2, 2],
            seeds: vec![0, 1],
            train: TrainConfig {
                max_epochs: 2,
                finetune_max_epochs: 1,
                probe_refit_epochs: 2,
                common_dim: 8,
                extractor: ExtractorSpec {
                    widths: vec![2, 4],
                    pool_after: vec![true, false],
                    ..ExtractorSpec::default()
                },
                ..TrainConfig::default()
            },
            memory_budget: 8,
            rows,
        }
    }

    #[test]
    fn validation_rejects_bad_rows() {
        assert!(plan(AblationRow::standard_matrix(1)).validate().is_ok());
        let bad_flags = MethodFlags {
            masks: true,
            ..MethodFlags::none()
        };
        let e = plan(vec![AblationRow::trained("x", bad_flags)]).validate();
        assert!(matches!(e, Err(Error::InvalidConfig(_))));
        let dup = vec![
            AblationRow::trained("a", MethodFlags::none()),
            AblationRow::trained("a", MethodFlags::full()),
        ];
        assert!(plan(dup).validate().is_err());
        let orphan = vec![AblationRow::probe("d", "full", ProbeKind::Drop, 1)];
        assert!(plan(orphan).validate().is_err());
        let late = vec![
            AblationRow::trained("full", MethodFlags::full()),
            AblationRow::probe("d", "full", ProbeKind::Drop, 2),
        ];
        assert!(plan(late).validate().is_err());
        let of_none = vec![
            AblationRow::trained("none", MethodFlags::none()),
            AblationRow::probe("d", "none", ProbeKind::Drop, 1),
        ];
        assert!(plan(of_none).validate().is_err());
        let both = AblationRow {
            probe: Some(ProbeSpec {
                of: "x".into(),
                kind: ProbeKind::Drop,
                extractor: 1,
            }),
            ..AblationRow::trained("x", MethodFlags::full())
        };
        assert!(plan(vec![both]).validate().is_err());
        assert!(plan(vec![AblationRow::trained("a,b", MethodFlags::none())]).validate().is_err());
    }

    #[test]
    fn tiny_suite_rows_streams_and_csv() {
        let (train, test) = generate_synthetic(&SyntheticSpec {
            num_classes: 4,
            train_per_class: 6,
            test_per_class: 3,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let rows = vec![
            AblationRow::trained("none", MethodFlags::none()),
            AblationRow::trained("full", MethodFlags::full()),
            AblationRow::probe("drop_1", "full", ProbeKind::Drop, 1),
            AblationRow::probe("keep_only_1", "full", ProbeKind::KeepOnly, 1),
        ];
        let p = plan(rows);
        let mut seen = 0;
        let res = run_ablation_suite(&train, &test, &p, |_| seen += 1).unwrap();
        assert_eq!(seen, 4);
        assert_eq!(res.summaries.len(), p.rows.len());
        for s in &res.summaries {
            assert_eq!(s.final_accuracy.per_seed.len(), 2);
            assert!(s.final_accuracy.std.is_some());
            assert_eq!(s.final_subset_accuracy.len(), 2);
        }
        assert!(res.summaries[0].mean_accuracy.is_some());
        assert!(res.summaries[2].mean_accuracy.is_none());
        assert!(res.summaries[2].note.is_some());
        for seed in [0, 1] {
            let orders: Vec<_> = res.runs.iter().filter(|r| r.seed == seed).map(|r| &r.class_order).collect();
            assert!(orders.windows(2).all(|w| w[0] == w[1]));
        }
        let probe_rows: Vec<AblationRow> = p.rows.iter().filter(|r| r.probe.is_some()).cloned().collect();
        let metrics = metric_rows(&res.runs, &probe_rows);
        let csv = format_metrics_csv(&metrics).unwrap();
        assert_eq!(parse_metrics_csv(&csv).unwrap(), metrics);
        assert!(metrics.iter().any(|m| m.run_id == "drop_1" && m.round == 2));
        assert!(!metrics.iter().any(|m| m.run_id == "drop_1" && m.round == 1));
    }

    #[test]
    fn differing_streams_are_detected() {
        let mk = |row: &str, sum: &str| RunRecord {
            row: row.into(),
            seed: 0,
            class_order: vec![],
            reports: vec![RoundReport {
                train_checksum: sum.into(),
                ..crate::evalkit::report::blank_report(1)
            }],
        };
        assert!(check_streams(&[mk("a", "x"), mk("b", "x")]).is_ok());
        assert!(check_streams(&[mk("a", "x"), mk("b", "y")]).is_err());
    }

    #[test]
    fn csv_parse_errors() {
        assert!(parse_metrics_csv("").is_err());
        assert_eq!(parse_metrics_csv(&format_metrics_csv(&[]).unwrap()).unwrap(), vec![]);
        assert!(parse_metrics_csv("a,b\n").is_err());
        let bad = format!("{METRICS_HEADER}\nfull,0,1,accuracy,,nope\n");
        assert!(parse_metrics_csv(&bad).is_err());
        let ok = format!("{METRICS_HEADER}\nfull,0,1,subset_accuracy,1,0.5\n\n");
        assert_eq!(parse_metrics_csv(&ok).unwrap()[0].subset, Some(1));
    }
}
