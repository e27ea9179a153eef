//! Result tables: one row per (topology, modification) with per-class
//! accuracy, micro-F1 and macro-F1, rendered as markdown, CSV or JSON.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvaluationReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Md,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Md => "md",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Md),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// e.g. `CNN`, `LSTM`, `Pretrained`.
    pub topology: String,
    /// Architecture string or modification (`L 3 F 100 C 3,4,5`, `focal`).
    pub configuration: String,
    pub labels: Vec<String>,
    /// Per-class accuracy (recall), `None` for classes absent from gold.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

impl ReportRow {
    pub fn new(topology: impl Into<String>, configuration: impl Into<String>, report: &EvaluationReport) -> Self {
        ReportRow {
            topology: topology.into(),
            configuration: configuration.into(),
            labels: report.labels.clone(),
            per_class_accuracy: report.per_class_accuracy.clone(),
            micro_f1: report.micro_f1,
            macro_f1: report.macro_f1,
        }
    }
}

fn topology_rank(t: &str) -> usize {
    ["cnn", "lstm", "rnn", "pretrained"]
        .iter()
        .position(|k| t.eq_ignore_ascii_case(k))
        .unwrap_or(usize::MAX)
}

fn numbers(s: &str) -> Vec<u64> {
    s.split(|c: char| !c.is_ascii_digit())
        .filter(|p| !p.is_empty())
        .filter_map(|p| p.parse().ok())
        .collect()
}

/// Topology (CNN, LSTM, RNN, pretrained, others by name), then the
/// numbers in the configuration string, then the string itself.
pub fn row_order(a: &ReportRow, b: &ReportRow) -> Ordering {
    topology_rank(&a.topology)
        .cmp(&topology_rank(&b.topology))
        .then_with(|| a.topology.cmp(&b.topology))
        .then_with(|| numbers(&a.configuration).cmp(&numbers(&b.configuration)))
        .then_with(|| a.configuration.cmp(&b.configuration))
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to render".into()))?;
    if rows.iter().any(|r| r.labels != first.labels) {
        return Err(Error::InvalidArgument("reports use different label schemes".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by(row_order);
    let mut header: Vec<String> = vec!["Model".into(), "Configuration".into()];
    header.extend(first.labels.iter().map(|l| format!("{l} acc (%)")));
    header.push("micro-F1 (%)".into());
    header.push("macro-F1 (%)".into());
    let cells = |r: &ReportRow| {
        let mut c = vec![r.topology.clone(), r.configuration.clone()];
        c.extend(r.per_class_accuracy.iter().map(|a| a.map(pct).unwrap_or_else(|| "-".into())));
        c.push(pct(r.micro_f1));
        c.push(pct(r.macro_f1));
        c
    };
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(&rows)?),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(cells(r))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv is utf-8"))
        }
        ReportFormat::Md => {
            let mut s = format!("| {} |\n", header.join(" | "));
            s.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for r in &rows {
                s.push_str(&format!("| {} |\n", cells(r).join(" | ")));
            }
            Ok(s)
        }
    }
}

/// Writes `<dir>/<stem>.<ext>` and returns its path.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, dir: &Path, stem: &str) -> Result<PathBuf> {
    let text = render_report(rows, format)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
