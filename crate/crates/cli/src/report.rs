//! Benchmark report document and its renderings.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trb_core::metrics::{Degradation, Histogram};

use crate::error::CliError;

/// Training data a model saw: the original set or one augmented set.
pub const ORIGINAL: &str = "original";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub scene_format_version: u32,
    pub checkpoint_version: u32,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub test_targets: usize,
}

/// One (model, training data, evaluation condition) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    /// `original`, or the perturbation label of the augmented training set.
    pub training: String,
    /// `original`, or the perturbation label applied at evaluation.
    pub condition: String,
    pub min_ade: f64,
    pub count: usize,
    pub failures: usize,
    /// Against the same model on original data; absent for the original condition.
    pub delta: Option<f64>,
    pub relative: Option<f64>,
    /// File holding the per-trajectory values, relative to the output directory.
    pub per_trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub model: String,
    pub training: String,
    pub condition: String,
    pub count: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub histogram: Histogram,
    pub deltas: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub provenance: Provenance,
    pub models: Vec<String>,
    pub perturbations: Vec<String>,
    pub rows: Vec<ResultRow>,
    pub distributions: Vec<DistributionRow>,
}

impl BenchmarkReport {
    pub fn row(&self, model: &str, training: &str, condition: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.training == training && r.condition == condition)
    }

    /// Every derived cell recomputed from its two minADE cells.
    pub fn check_consistency(&self) -> Result<(), String> {
        for r in &self.rows {
            if r.condition == ORIGINAL {
                continue;
            }
            let base = self
                .row(&r.model, &r.training, ORIGINAL)
                .ok_or_else(|| format!("{} / {} has no original row", r.model, r.training))?;
            let d = Degradation::between(base.min_ade, r.min_ade);
            if Some(d.delta) != r.delta || d.relative != r.relative {
                return Err(format!("{} / {} / {} is inconsistent", r.model, r.training, r.condition));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io("report", e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data {
            stage: "report".into(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Md,
    Summary,
}

fn pct(r: Option<f64>) -> String {
    match r {
        Some(r) => format!("{:+.2}%", r * 100.0),
        None => "n/a".into(),
    }
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

/// Table-1 layout: one row per model trained on original data.
pub fn markdown(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    let mut header = String::from("| model | original minADE |");
    let mut rule = String::from("|---|---|");
    for p in &report.perturbations {
        write!(header, " {p} minADE | {p} Δ | {p} %Δ |").unwrap();
        rule.push_str("---|---|---|");
    }
    writeln!(out, "## Trained on original data\n\n{header}\n{rule}").unwrap();
    for m in &report.models {
        let Some(base) = report.row(m, ORIGINAL, ORIGINAL) else { continue };
        let mut line = format!("| {m} | {:.3} |", base.min_ade);
        for p in &report.perturbations {
            match report.row(m, ORIGINAL, p) {
                Some(r) => write!(line, " {:.3} | {} | {} |", r.min_ade, num(r.delta), pct(r.relative)).unwrap(),
                None => line.push_str(" n/a | n/a | n/a |"),
            }
        }
        writeln!(out, "{line}").unwrap();
    }

    let augmented: Vec<&ResultRow> = report.rows.iter().filter(|r| r.training != ORIGINAL).collect();
    if !augmented.is_empty() {
        let mut header = String::from("| model |");
        let mut rule = String::from("|---|");
        for p in &report.perturbations {
            write!(header, " {p} original minADE | {p} clean change | {p} perturbed minADE | {p} %Δ |").unwrap();
            rule.push_str("---|---|---|---|");
        }
        writeln!(out, "\n## Trained on augmented data\n\n{header}\n{rule}").unwrap();
        for m in &report.models {
            if !augmented.iter().any(|r| &r.model == m) {
                continue;
            }
            let reference = report.row(m, ORIGINAL, ORIGINAL).map(|r| r.min_ade);
            let mut line = format!("| {m} |");
            for p in &report.perturbations {
                match (report.row(m, p, ORIGINAL), report.row(m, p, p)) {
                    (Some(c), Some(r)) => {
                        let change = reference.and_then(|o| Degradation::between(o, c.min_ade).relative);
                        write!(line, " {:.3} | {} | {:.3} | {} |", c.min_ade, pct(change), r.min_ade, pct(r.relative)).unwrap()
                    }
                    _ => line.push_str(" n/a | n/a | n/a | n/a |"),
                }
            }
            writeln!(out, "{line}").unwrap();
        }
    }
    out
}

/// Long-form CSV of every result row.
pub fn results_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from("model,training,condition,min_ade,count,failures,delta,relative_pct\n");
    for r in &report.rows {
        let delta = r.delta.map_or(String::new(), |d| d.to_string());
        let rel = r.relative.map_or(String::new(), |x| format!("{:.2}", x * 100.0));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model, r.training, r.condition, r.min_ade, r.count, r.failures, delta, rel
        )
        .unwrap();
    }
    out
}

pub fn summary(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    for r in &report.rows {
        let change = match r.relative {
            Some(_) => format!(" Δ={} %Δ={}", num(r.delta), pct(r.relative)),
            None => String::new(),
        };
        writeln!(
            out,
            "{:<16} trained={:<16} eval={:<16} minADE={:.3}{}",
            r.model, r.training, r.condition, r.min_ade, change
        )
        .unwrap();
    }
    out
}

fn write(dir: &Path, name: &str, body: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|e| CliError::io("report", e))?;
    f.write_all(body).map_err(|e| CliError::io("report", e))?;
    Ok(path)
}

pub(crate) fn histogram_csv(h: &Histogram) -> String {
    let mut buf = Vec::new();
    h.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

pub(crate) fn histogram_file(d: &DistributionRow) -> String {
    format!("histograms/{}__{}__{}.csv", d.model, d.training, d.condition)
}

/// Writes the requested rendering into `dir`; returns the files written.
pub fn emit_report(report: &BenchmarkReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io("report", e))?;
    let mut written = Vec::new();
    match format {
        Format::Md => written.push(write(dir, "report.md", markdown(report).as_bytes())?),
        Format::Summary => {
            written.push(write(dir, "summary.txt", summary(report).as_bytes())?);
        }
        Format::Csv => {
            written.push(write(dir, "results.csv", results_csv(report).as_bytes())?);
            fs::create_dir_all(dir.join("histograms")).map_err(|e| CliError::io("report", e))?;
            let mut index = String::from("model,training,condition,count,median,p25,p75,histogram\n");
            for d in &report.distributions {
                let file = histogram_file(d);
                written.push(write(dir, &file, histogram_csv(&d.histogram).as_bytes())?);
                writeln!(
                    index,
                    "{},{},{},{},{},{},{},{}",
                    d.model, d.training, d.condition, d.count, d.median, d.p25, d.p75, file
                )
                .unwrap();
            }
            written.push(write(dir, "distributions.csv", index.as_bytes())?);
        }
    }
    Ok(written)
}
