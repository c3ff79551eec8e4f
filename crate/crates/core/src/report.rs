//! Report bundles and their table / JSON / CSV / plot-data encodings.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eval::{AccuracyReport, ProbeReport};
use crate::error::{Error, Result};
use crate::training::{RunReport, Setting};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
    /// Per-seed test accuracies per setting and training fraction.
    PlotData,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "plotdata" => Ok(Self::PlotData),
            other => Err(Error::argument(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    #[serde(default)]
    pub accuracy: Vec<AccuracyReport>,
    #[serde(default)]
    pub probes: Vec<ProbeReport>,
    #[serde(default)]
    pub runs: Vec<RunReport>,
}

impl ReportBundle {
    pub fn is_empty(&self) -> bool {
        self.accuracy.is_empty() && self.probes.is_empty() && self.runs.is_empty()
    }

    pub fn merge(&mut self, other: ReportBundle) {
        self.accuracy.extend(other.accuracy);
        self.probes.extend(other.probes);
        self.runs.extend(other.runs);
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Report(format!("bad report JSON: {e}")))
    }
}

pub const CSV_HEADER: &str = "kind,dataset,split,mode,setting,train_fraction,seed,correct,total,accuracy,random_baseline,best_val_accuracy,mean,std,max";
pub const PLOTDATA_HEADER: &str = "setting,train_fraction,seed,test_accuracy,best_val_accuracy";

fn split_name(r: &AccuracyReport) -> String {
    serde_json::to_value(r.split)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report(bundle: &ReportBundle, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(bundle).expect("bundle serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(bundle),
        ReportFormat::PlotData => render_plotdata(bundle),
        ReportFormat::Table => render_table(bundle),
    }
}

fn render_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let acc_row = |out: &mut String, kind: &str, r: &AccuracyReport| {
        let _ = writeln!(
            out,
            "{kind},{},{},{},,,,{},{},{},{},,,,",
            csv_field(&r.dataset),
            split_name(r),
            csv_field(&r.mode),
            r.correct,
            r.total,
            r.accuracy,
            r.random_baseline
        );
    };
    for r in &bundle.accuracy {
        acc_row(&mut out, "accuracy", r);
    }
    for p in &bundle.probes {
        acc_row(&mut out, "probe", &p.hyp_only);
    }
    for run in &bundle.runs {
        for s in &run.per_seed {
            let _ = writeln!(
                out,
                "seed,,,,{},{},{},,,{},,{},,,",
                run.setting, run.train_fraction, s.seed, s.test_accuracy, s.best_val_accuracy
            );
        }
        let _ = writeln!(
            out,
            "summary,,,,{},{},,,,,,,{},{},{}",
            run.setting, run.train_fraction, run.mean, run.std, run.max
        );
    }
    out
}

fn render_plotdata(bundle: &ReportBundle) -> String {
    let mut out = String::from(PLOTDATA_HEADER);
    out.push('\n');
    for run in &bundle.runs {
        for s in &run.per_seed {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                run.setting, run.train_fraction, s.seed, s.test_accuracy, s.best_val_accuracy
            );
        }
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn render_table(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    if !bundle.accuracy.is_empty() {
        let _ = writeln!(out, "{:<16} {:<10} {:<18} {:>9} {:>8} {:>8}", "dataset", "split", "mode", "correct", "acc(%)", "rand(%)");
        for r in &bundle.accuracy {
            let _ = writeln!(
                out,
                "{:<16} {:<10} {:<18} {:>4}/{:<4} {:>8} {:>8}",
                r.dataset,
                split_name(r),
                r.mode,
                r.correct,
                r.total,
                pct(r.accuracy),
                pct(r.random_baseline)
            );
        }
    }
    if !bundle.probes.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "{:<16} {:<10} {:>8}", "dataset", "mode", "acc(%)");
        for p in &bundle.probes {
            let _ = writeln!(out, "{:<16} {:<10} {:>8}", p.hyp_only.dataset, "hyp-only", pct(p.hyp_only.accuracy));
            let _ = writeln!(out, "{:<16} {:<10} {:>8}", "", "random", pct(p.random));
            let _ = writeln!(out, "{:<16} {:<10} {:>8.2}", "", "ratio", p.ratio);
        }
    }
    if !bundle.runs.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "{:<12} {:>9} {:>6} {:>8} {:>8} {:>8} {:>6}", "setting", "fraction", "seeds", "mean(%)", "std(%)", "max(%)", "failed");
        for run in &bundle.runs {
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>6} {:>8} {:>8} {:>8} {:>6}",
                run.setting.as_str(),
                run.train_fraction,
                run.per_seed.len(),
                pct(run.mean),
                pct(run.std),
                pct(run.max),
                run.failures.len()
            );
        }
        out.push_str(&seed_table(&bundle.runs));
        if bundle.runs.iter().any(|r| r.setting != Setting::Ours) {
            out.push_str("\nnote: head settings use a linear head on mean-pooled backend features\n");
        }
    }
    out
}

/// Test accuracy per seed, one column per (setting, fraction).
fn seed_table(runs: &[RunReport]) -> String {
    let mut seeds: Vec<u64> = runs.iter().flat_map(|r| r.per_seed.iter().map(|s| s.seed)).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut out = String::from("\nseed");
    for r in runs {
        let _ = write!(out, " {:>18}", format!("{}@{}", r.setting, r.train_fraction));
    }
    out.push('\n');
    for seed in seeds {
        let _ = write!(out, "{seed:<4}");
        for r in runs {
            let cell = r
                .per_seed
                .iter()
                .find(|s| s.seed == seed)
                .map(|s| pct(s.test_accuracy))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell:>18}");
        }
        out.push('\n');
    }
    out
}

pub fn emit_report(bundle: &ReportBundle, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(bundle, format)).map_err(|e| Error::io(path, e))
}
