//! Tables and figures rebuilt from the CSV logs of eval and finetune runs;
//! no model is loaded and no data is touched, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use ltssl_core::evaluation::{aggregate_cv, box_stats, per_interval_breakdown, CvReport, IntervalBin, MetricSet, INTERVAL_BIN_MONTHS};
use ltssl_core::models::Variant;
use ltssl_core::training::InitKind;

use super::eval::{METRICS_FILE, METRICS_HEADER, PAIRS_FILE, PAIRS_HEADER};
use super::finetune::{STANDARD_HORIZONS, TEST_METRICS_FILE, TEST_METRICS_HEADER};
use super::{num, Global};
use crate::config::Snapshot;
use crate::error::usage;
use crate::io::{csv, prepare_out, require_out, write, Table};
use crate::svg::{interval_figure, IntervalColumn};

const VARIANTS: [Variant; 2] = [Variant::Vgg, Variant::Dense];
const GAP: &str = "n/a";

/// Mean and population standard deviation over folds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub folds: usize,
}

impl Stat {
    fn of(report: &CvReport, key: &str) -> Result<Self> {
        match (report.mean.get(key), report.std.get(key)) {
            (Some(&mean), Some(&std)) => Ok(Stat {
                mean,
                std,
                folds: report.per_fold.len(),
            }),
            _ => bail!("metric `{key}` missing from the fold results"),
        }
    }

    pub fn cell(&self) -> String {
        format!("{:.3} ± {:.3}", self.mean, self.std)
    }
}

fn stat_cell(s: Option<&Stat>) -> String {
    s.map_or_else(|| GAP.into(), Stat::cell)
}

fn stat_csv(s: Option<&Stat>) -> [String; 3] {
    match s {
        Some(s) => [num(s.mean), num(s.std), s.folds.to_string()],
        None => [String::new(), String::new(), "0".into()],
    }
}

pub fn method_label(init: InitKind) -> &'static str {
    match init {
        InitKind::Scratch => "Training from scratch (i)",
        InitKind::Autoencoder => "OCT autoencoder (ii)",
        InitKind::SelfSupervised => "Self-supervised",
    }
}

fn horizon_label(h: f64) -> String {
    if h.fract() == 0.0 {
        format!("{h:.0} m.")
    } else {
        format!("{h} m.")
    }
}

/// One method at one horizon of the conversion table.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRow {
    pub init: InitKind,
    pub horizon: f64,
    pub auc: Stat,
    pub ap: Stat,
}

impl ClassRow {
    pub fn from_report(init: InitKind, horizon: f64, report: &CvReport) -> Result<Self> {
        Ok(ClassRow {
            init,
            horizon,
            auc: Stat::of(report, "roc_auc")?,
            ap: Stat::of(report, "average_precision")?,
        })
    }
}

/// The three standard horizons plus any other horizon present.
fn horizons(rows: &[ClassRow]) -> Vec<f64> {
    let mut hs: Vec<f64> = STANDARD_HORIZONS.to_vec();
    hs.extend(rows.iter().map(|r| r.horizon));
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    hs
}

type Block = (&'static str, &'static str, fn(&ClassRow) -> &Stat);

const BLOCKS: [Block; 2] = [("roc_auc", "ROC AuC", |r| &r.auc), ("average_precision", "Average Precision", |r| &r.ap)];

fn find(rows: &[ClassRow], init: InitKind, h: f64) -> Option<&ClassRow> {
    rows.iter().find(|r| r.init == init && r.horizon == h)
}

/// Every method × horizon cell of both blocks; missing runs leave empty
/// values and zero folds.
pub fn table2_csv(rows: &[ClassRow]) -> String {
    let hs = horizons(rows);
    let mut out = Vec::new();
    for (key, _, pick) in BLOCKS {
        for init in InitKind::ALL {
            for &h in &hs {
                let [mean, std, folds] = stat_csv(find(rows, init, h).map(pick));
                out.push(vec![key.into(), init.as_str().into(), num(h), mean, std, folds]);
            }
        }
    }
    csv(&["metric", "method", "horizon_months", "mean", "std", "folds"], out)
}

/// Two stacked blocks (ROC AuC, then average precision) with one row per
/// method and one column per horizon.
pub fn table2_markdown(rows: &[ClassRow]) -> String {
    let hs = horizons(rows);
    let head: Vec<String> = hs.iter().map(|&h| horizon_label(h)).collect();
    let rule = "|---".repeat(hs.len() + 1) + "|";
    let mut md = String::new();
    for (_, title, pick) in BLOCKS {
        let _ = writeln!(md, "**{title}** (mean ± std over folds)\n");
        let _ = writeln!(md, "| Model | {} |\n{rule}", head.join(" | "));
        for init in InitKind::ALL {
            let cells: Vec<String> = hs.iter().map(|&h| stat_cell(find(rows, init, h).map(pick))).collect();
            let _ = writeln!(md, "| {} | {} |", method_label(init), cells.join(" | "));
        }
        md.push('\n');
    }
    md
}

/// Pretext results of one encoder variant.
struct PretextRun {
    r2: Stat,
    mae: Stat,
    accuracy: Stat,
    bins: Vec<IntervalBin>,
}

fn folds_from(table: &Table, known: &[&str]) -> Result<Vec<MetricSet>> {
    let mut by_rotation: BTreeMap<usize, MetricSet> = BTreeMap::new();
    for row in 0..table.len() {
        let rotation: usize = table.parse(row, 0)?;
        let name = table.str(row, 1);
        if !known.contains(&name) {
            bail!("{}: row {}: unknown metric `{name}`", table.path.display(), row + 2);
        }
        let value = table.number(row, 2)?;
        if by_rotation.entry(rotation).or_default().insert(name.into(), value).is_some() {
            bail!("{}: row {}: duplicate `{name}` for rotation {rotation}", table.path.display(), row + 2);
        }
    }
    if by_rotation.keys().copied().ne(0..by_rotation.len()) {
        bail!("{}: rotations are not numbered 0..k", table.path.display());
    }
    if let Some((r, _)) = by_rotation.iter().find(|(_, m)| m.len() != known.len()) {
        bail!("{}: rotation {r} lacks some of {}", table.path.display(), known.join(", "));
    }
    Ok(by_rotation.into_values().collect())
}

fn read_pretext(run: &Path) -> Result<PretextRun> {
    let metrics = Table::read(&run.join(METRICS_FILE), &METRICS_HEADER)?;
    let report = aggregate_cv(&folds_from(&metrics, &["mae_months", "order_accuracy", "r2"])?)?;
    let pairs = Table::read(&run.join(PAIRS_FILE), &PAIRS_HEADER)?;
    let (mut y, mut yhat) = (Vec::with_capacity(pairs.len()), Vec::with_capacity(pairs.len()));
    for row in 0..pairs.len() {
        pairs.parse::<usize>(row, 0)?;
        pairs.parse::<u32>(row, 1)?;
        let truth = pairs.number(row, 2)?;
        if truth == 0.0 {
            bail!("{}: row {}: zero interval", pairs.path.display(), row + 2);
        }
        y.push(truth);
        yhat.push(pairs.number(row, 3)?);
    }
    if y.is_empty() {
        bail!("{}: no pairs", pairs.path.display());
    }
    Ok(PretextRun {
        r2: Stat::of(&report, "r2")?,
        mae: Stat::of(&report, "mae_months")?,
        accuracy: Stat::of(&report, "order_accuracy")?,
        bins: per_interval_breakdown(&y, &yhat, INTERVAL_BIN_MONTHS)?,
    })
}

fn read_finetune(run: &Path, snap: &Snapshot) -> Result<ClassRow> {
    let Some(cfg) = &snap.finetune else {
        bail!("{}: finetune run records no [finetune] section", run.join(crate::config::SNAPSHOT).display());
    };
    let table = Table::read(&run.join(TEST_METRICS_FILE), &TEST_METRICS_HEADER)?;
    let report = aggregate_cv(&folds_from(&table, &["average_precision", "roc_auc"])?)?;
    ClassRow::from_report(cfg.init, cfg.horizon, &report)
}

fn table1(pretext: &BTreeMap<String, PretextRun>) -> (String, String) {
    let mut rows = Vec::new();
    let mut md = String::from("| Network | R² | MAE (months) | Accuracy |\n|---|---|---|---|\n");
    for v in VARIANTS {
        let run = pretext.get(&v.to_string());
        let stats = [run.map(|p| &p.r2), run.map(|p| &p.mae), run.map(|p| &p.accuracy)];
        let mut row = vec![v.to_string()];
        for s in stats {
            let [mean, std, folds] = stat_csv(s);
            row.extend([mean, std]);
            if row.len() == 3 {
                row.push(folds);
            }
        }
        rows.push(row);
        let cells: Vec<String> = stats.iter().map(|s| s.map_or_else(|| GAP.into(), |s| format!("{:.3}", s.mean))).collect();
        let _ = writeln!(md, "| {v} | {} |", cells.join(" | "));
    }
    let header = ["network", "r2_mean", "r2_std", "folds", "mae_months_mean", "mae_months_std", "accuracy_mean", "accuracy_std"];
    (csv(&header, rows), md)
}

/// Outcome of the report: files written plus the runs that were missing.
pub fn run(g: &Global, runs: &[PathBuf]) -> Result<()> {
    let out = require_out(g.out.as_deref(), "report")?;
    let mut pretext: BTreeMap<String, PretextRun> = BTreeMap::new();
    let mut classes: Vec<ClassRow> = Vec::new();
    let mut missing: Vec<&Path> = Vec::new();
    for run in runs {
        if !run.is_dir() {
            eprintln!("warning: run directory {} not found; its cells are left empty", run.display());
            missing.push(run);
            continue;
        }
        let snap = Snapshot::read(run)?;
        match snap.run.command.as_str() {
            "eval" => {
                let variant = snap.pretrain(run)?.encoder.variant.to_string();
                if pretext.insert(variant.clone(), read_pretext(run)?).is_some() {
                    bail!(usage(format!("two eval runs for the {variant} encoder")));
                }
            }
            "finetune" => {
                let row = read_finetune(run, &snap)?;
                if find(&classes, row.init, row.horizon).is_some() {
                    bail!(usage(format!(
                        "two finetune runs for {} at {} months",
                        row.init.as_str(),
                        row.horizon
                    )));
                }
                classes.push(row);
            }
            other => bail!(usage(format!(
                "{} is a `{other}` run; report reads `eval` and `finetune` runs",
                run.display()
            ))),
        }
    }
    prepare_out(&out, g.force)?;

    let (t1_csv, t1_md) = table1(&pretext);
    write(&out.join("table1.csv"), t1_csv)?;
    write(&out.join("table1.md"), &t1_md)?;

    let mut errors = Vec::new();
    let mut accuracy = Vec::new();
    let mut fig_md = String::new();
    for v in VARIANTS {
        let name = v.to_string();
        let Some(run) = pretext.get(&name) else { continue };
        let mut columns = Vec::new();
        for bin in &run.bins {
            for e in &bin.relative_errors_pct {
                errors.push(vec![name.clone(), num(bin.interval), num(*e)]);
            }
            accuracy.push(vec![name.clone(), num(bin.interval), bin.count().to_string(), num(bin.order_accuracy)]);
            columns.push(IntervalColumn {
                interval: bin.interval,
                errors: box_stats(&bin.relative_errors_pct)?,
                order_accuracy: bin.order_accuracy,
            });
        }
        let file = format!("fig3_{name}.svg");
        write(&out.join(&file), interval_figure(&name, &columns))?;
        let _ = writeln!(fig_md, "![{name}]({file})\n");
        let _ = writeln!(fig_md, "| {name} interval (months) | Pairs | Median relative error [%] | Order accuracy |\n|---|---|---|---|");
        for c in &columns {
            let n = run.bins.iter().find(|b| b.interval == c.interval).map_or(0, IntervalBin::count);
            let _ = writeln!(fig_md, "| {} | {n} | {:.1} | {:.3} |", c.interval, c.errors.median, c.order_accuracy);
        }
        fig_md.push('\n');
    }
    write(&out.join("fig3_relative_error.csv"), csv(&["network", "interval_months", "relative_error_pct"], errors))?;
    write(
        &out.join("fig3_order_accuracy.csv"),
        csv(&["network", "interval_months", "pairs", "order_accuracy"], accuracy),
    )?;

    classes.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let t2_md = table2_markdown(&classes);
    write(&out.join("table2.csv"), table2_csv(&classes))?;
    write(&out.join("table2.md"), &t2_md)?;

    let mut md = String::from("# Report\n\n## Interval prediction\n\n");
    md.push_str(&t1_md);
    md.push_str("\n## Per-interval breakdown\n\n");
    if fig_md.is_empty() {
        md.push_str("No eval runs.\n\n");
    }
    md.push_str(&fig_md);
    md.push_str("## Conversion prediction\n\n");
    md.push_str(&t2_md);
    if !missing.is_empty() {
        md.push_str("## Missing runs\n\n");
        for m in &missing {
            let _ = writeln!(md, "- {}", m.display());
        }
    }
    write(&out.join("report.md"), md)?;

    let mut snap = Snapshot::new("report");
    snap.run.runs = runs.to_vec();
    snap.write(&out)?;
    println!(
        "report: {} eval run(s), {} finetune run(s), {} missing -> {}",
        pretext.len(),
        classes.len(),
        missing.len(),
        out.display()
    );
    Ok(())
}
