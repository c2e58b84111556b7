use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cilfuse::evalkit::{parse_metrics_csv, MetricRow};
use clap::ValueEnum;
use plotters::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Seed-mean accuracy per round, one curve per row.
    Accuracy,
    /// Seed-mean accuracy on each round's classes over time, one file per row.
    Forgetting,
}

type Curve = (String, Vec<(f64, f64)>);

/// Seed means per (`key(row)`, round), ordered by key.
fn seed_means<K: Ord>(rows: &[&MetricRow], key: impl Fn(&MetricRow) -> K) -> Vec<(K, Vec<(f64, f64)>)> {
    let mut acc: BTreeMap<K, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(key(r)).or_default().entry(r.round).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, pts)| (k, pts.into_iter().map(|(t, (s, n))| (t as f64, s / n as f64)).collect()))
        .collect()
}

fn draw(path: &Path, title: &str, curves: &[Curve]) -> Result<()> {
    let max_round = curves
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.0))
        .fold(1.0, f64::max);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.5..max_round + 0.5, 0.0..1.0)?;
    chart
        .configure_mesh()
        .x_desc("round")
        .y_desc("accuracy")
        .x_labels(max_round as usize)
        .x_label_formatter(&|x| format!("{x:.0}"))
        .draw()?;
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Renders SVG plots from a metrics file into `out_dir`; returns the files written.
pub fn cmd_plot(metrics: &Path, kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(metrics).with_context(|| format!("reading {}", metrics.display()))?;
    let rows = parse_metrics_csv(&text)?;
    if rows.is_empty() {
        bail!("{} holds no metrics", metrics.display());
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match kind {
        PlotKind::Accuracy => {
            let sel: Vec<&MetricRow> = rows.iter().filter(|r| r.metric == "accuracy").collect();
            if sel.is_empty() {
                bail!("no accuracy metrics to plot");
            }
            let path = out_dir.join("accuracy.svg");
            draw(&path, "NME accuracy on all seen classes", &seed_means(&sel, |r| r.run_id.clone()))?;
            written.push(path);
        }
        PlotKind::Forgetting => {
            let sel: Vec<&MetricRow> = rows.iter().filter(|r| r.metric == "subset_accuracy").collect();
            if sel.is_empty() {
                bail!("no subset accuracy metrics to plot");
            }
            let mut by_row: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
            for r in sel {
                by_row.entry(r.run_id.as_str()).or_default().push(r);
            }
            for (row, rs) in by_row {
                let curves: Vec<Curve> = seed_means(&rs, |r| r.subset.unwrap_or(0))
                    .into_iter()
                    .map(|(k, pts)| (format!("round {k} classes"), pts))
                    .collect();
                let path = out_dir.join(format!("forgetting-{row}.svg"));
                draw(&path, &format!("{row}: accuracy per introduction round"), &curves)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
