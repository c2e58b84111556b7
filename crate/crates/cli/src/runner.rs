use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cilfuse::evalkit::{
    format_metrics_csv, metric_rows, run_ablation_suite, run_continual, AblationRow, RunRecord, RunSummary,
    SuiteResult,
};
use cilfuse::nets::checkpoint::save_checkpoint;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const OUT_ENV: &str = "CILFUSE_OUT";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
}

/// Index of everything a run wrote, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub rows: Vec<String>,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORTS_FILE: &str = "reports.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub config_hash: String,
    pub summaries: Vec<RunSummary>,
}

fn output_root(opts: &RunOptions, cfg: &RunConfig) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !force {
            bail!("{} already exists; pass --force to overwrite", dir.display());
        }
        fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

struct Writer<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl Writer<'_> {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Loads the config, applies overrides and returns it with its hash.
pub fn resolve_config(opts: &RunOptions, ablate: bool) -> Result<(RunConfig, String)> {
    let mut cfg = RunConfig::load(&opts.config)?;
    if let Some(s) = opts.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate(ablate)?;
    let hash = cfg.canonical_hash()?;
    Ok((cfg, hash))
}

/// `run` trains one configuration per seed with per-round checkpoints;
/// `ablate` trains every row of the ablation table.
pub fn execute(opts: &RunOptions, ablate: bool, mut progress: impl FnMut(&str)) -> Result<RunOutcome> {
    let (cfg, hash) = resolve_config(opts, ablate)?;
    let command = if ablate { "ablate" } else { "run" };
    let dir = output_root(opts, &cfg).join(format!("{command}-{}", &hash[..12]));
    prepare_dir(&dir, opts.force)?;
    let base = opts.config.parent().unwrap_or(Path::new("."));
    let (train, test) = cfg.dataset.load(base)?;
    let plan = cfg.plan(ablate);
    let mut w = Writer {
        dir: &dir,
        artifacts: Vec::new(),
    };
    w.write(CONFIG_FILE, cfg.to_toml()?.as_bytes())?;

    let result = if ablate {
        run_ablation_suite(&train, &test, &plan, |r| {
            progress(&format!("{} seed {}: final accuracy {:.4}", r.row, r.seed, last_accuracy(r)))
        })?
    } else {
        let row = &plan.rows[0];
        let mut runs = Vec::new();
        for &seed in &plan.seeds {
            let stream = plan.stream(train.num_classes, seed)?;
            let mut ckpts = Vec::new();
            let reports = run_continual(
                &train,
                &test,
                &stream,
                cfg.flags,
                &plan.train,
                plan.memory_budget,
                seed,
                &[],
                |state, report| {
                    let rel = format!("checkpoints/seed-{seed}/round-{}", report.round);
                    let masks = state.round_masks().map(|m| m.to_named()).unwrap_or_default();
                    let model = state.model().expect("model after a finished round");
                    let m = save_checkpoint(&dir.join(&rel), report.round, model, &masks)?;
                    ckpts.extend(m.files.iter().map(|f| format!("{rel}/{f}")));
                    Ok(())
                },
            )?;
            w.artifacts.extend(ckpts);
            let record = RunRecord {
                row: row.name.clone(),
                seed,
                class_order: stream.order.permutation.clone(),
                reports,
            };
            progress(&format!("{} seed {seed}: final accuracy {:.4}", row.name, last_accuracy(&record)));
            runs.push(record);
        }
        let summaries = vec![cilfuse::evalkit::summarize(row, &plan.seeds, &runs)?];
        SuiteResult { runs, summaries }
    };

    let probe_rows: Vec<AblationRow> = plan.rows.iter().filter(|r| r.probe.is_some()).cloned().collect();
    let metrics = metric_rows(&result.runs, &probe_rows);
    w.write(METRICS_FILE, format_metrics_csv(&metrics)?.as_bytes())?;
    let keyed: BTreeMap<&str, &RunSummary> = result.summaries.iter().map(|s| (s.row.as_str(), s)).collect();
    w.write(SUMMARY_FILE, &json(&keyed)?)?;
    w.write(REPORTS_FILE, &json(&result.runs)?)?;

    let mut notes = Vec::new();
    if probe_rows.iter().any(|r| r.probe.is_some()) {
        notes.push(
            "drop/keep-only rows are inference-time probes of a trained model; class means are recomputed and the fused head is re-fit on exemplars only"
                .to_string(),
        );
    }
    let mut artifacts = w.artifacts;
    artifacts.push(MANIFEST_FILE.to_string());
    artifacts.sort();
    let manifest = RunManifest {
        command: command.into(),
        config_hash: hash.clone(),
        rows: plan.rows.iter().map(|r| r.name.clone()).collect(),
        seeds: plan.seeds.clone(),
        artifacts,
        notes,
    };
    fs::write(dir.join(MANIFEST_FILE), json(&manifest)?)?;
    Ok(RunOutcome {
        dir,
        config_hash: hash,
        summaries: result.summaries,
    })
}

fn last_accuracy(r: &RunRecord) -> f64 {
    r.reports.last().map_or(f64::NAN, |x| x.accuracy)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Plain-text table of seed-mean results, one line per row.
pub fn summary_table(summaries: &[RunSummary]) -> String {
    let mut s = format!("{:<16} {:>14} {:>14} {:>10}\n", "row", "final ACC", "Mean", "size");
    for r in summaries {
        let ms = |st: &cilfuse::evalkit::SeedStat| match st.std {
            Some(sd) => format!("{}±{}", pct(st.mean), pct(sd)),
            None => pct(st.mean),
        };
        let mean = r.mean_accuracy.as_ref().map_or("-".into(), ms);
        let size = r.final_size_ratio.as_ref().map_or("-".into(), |x| format!("{:.3}", x.mean));
        let _ = writeln!(s, "{:<16} {:>14} {:>14} {:>10}", r.row, ms(&r.final_accuracy), mean, size);
    }
    s
}

/// Manifest plus per-round pruning statistics of a finished run directory.
pub fn inspect(dir: &Path) -> Result<String> {
    let manifest: RunManifest = serde_json::from_slice(
        &fs::read(dir.join(MANIFEST_FILE)).with_context(|| format!("reading manifest in {}", dir.display()))?,
    )?;
    let runs: Vec<RunRecord> = serde_json::from_slice(&fs::read(dir.join(REPORTS_FILE))?)?;
    let mut s = String::new();
    writeln!(s, "command: {}", manifest.command)?;
    writeln!(s, "config hash: {}", manifest.config_hash)?;
    writeln!(s, "rows: {}", manifest.rows.join(", "))?;
    writeln!(s, "seeds: {:?}", manifest.seeds)?;
    writeln!(s, "artifacts: {}", manifest.artifacts.len())?;
    for a in &manifest.artifacts {
        writeln!(s, "  {a}")?;
    }
    for n in &manifest.notes {
        writeln!(s, "note: {n}")?;
    }
    for run in &runs {
        writeln!(s, "{} seed {} (order {:?})", run.row, run.seed, run.class_order)?;
        for r in &run.reports {
            write!(
                s,
                "  round {}: accuracy {} params {} ratio {:.3}",
                r.round,
                pct(r.accuracy),
                r.param_count,
                r.size_ratio
            )?;
            match &r.prune {
                Some(p) => {
                    write!(
                        s,
                        " pruned {}->{} params, kept kernels {:.3}:",
                        p.params_before, p.params_after, p.kept_fraction
                    )?;
                    for l in &p.layers {
                        write!(s, " {} {}/{}", l.name, l.kept, l.total)?;
                    }
                    writeln!(s)?;
                }
                None => writeln!(s, " (no pruning)")?,
            }
        }
    }
    Ok(s)
}
