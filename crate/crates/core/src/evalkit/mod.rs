//! Metrics, forgetting curves, size tracking and the ablation suite.

mod desk;
mod metrics;
mod report;
mod suite;

pub use desk::{desk_dataset, desk_plan, desk_train_config, DESK_MEMORY_BUDGET, DESK_SEEDS};
pub use metrics::{
    mean_accuracy, overall_accuracy, size_ratio_series, subset_accuracy_curves, weighted_subset_accuracy, RunSummary,
    SeedStat,
};
pub use report::{ProbeKind, ProbeReport, RoundReport, StageTelemetry};
pub use suite::{
    format_metrics_csv, metric_rows, parse_metrics_csv, run_ablation_suite, run_continual, summarize, AblationRow, MetricRow,
    ProbeSpec, RunRecord, SuitePlan, SuiteResult, METRICS_HEADER,
};
