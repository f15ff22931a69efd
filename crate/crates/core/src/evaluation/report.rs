use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BenchmarkReport, ExperimentReport};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,network,acc,pre,rec,f1,dr_bio_s,dr_land_s,train_s,test_s,params";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown format {other:?} (csv, text or json)"
            ))),
        }
    }
}

/// One table row: metrics in percent (2 decimals), times in seconds
/// (3 decimals).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub network: String,
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub dr_bio_s: f64,
    pub dr_land_s: f64,
    pub train_s: f64,
    pub test_s: f64,
    pub params: usize,
}

fn rounded(v: f64, decimals: usize) -> f64 {
    format!("{v:.decimals$}").parse().expect("formatted float parses")
}

fn row(e: &ExperimentReport) -> ReportRow {
    ReportRow {
        method: e.method.clone(),
        network: e.topology.name().to_string(),
        acc: rounded(100.0 * e.mean.accuracy, 2),
        pre: rounded(100.0 * e.mean.precision, 2),
        rec: rounded(100.0 * e.mean.recall, 2),
        f1: rounded(100.0 * e.mean.f1, 2),
        dr_bio_s: rounded(e.dr_bio_seconds, 3),
        dr_land_s: rounded(e.dr_land_seconds, 3),
        train_s: rounded(e.train_seconds, 3),
        test_s: rounded(e.test_seconds, 3),
        params: e.params,
    }
}

/// Table rows for experiments that ran at least one fold.
pub fn report_rows(report: &BenchmarkReport) -> Vec<ReportRow> {
    report
        .experiments
        .iter()
        .filter(|e| !e.folds.is_empty())
        .map(row)
        .collect()
}

fn cells(r: &ReportRow) -> [String; 11] {
    [
        r.method.clone(),
        r.network.clone(),
        format!("{:.2}", r.acc),
        format!("{:.2}", r.pre),
        format!("{:.2}", r.rec),
        format!("{:.2}", r.f1),
        format!("{:.3}", r.dr_bio_s),
        format!("{:.3}", r.dr_land_s),
        format!("{:.3}", r.train_s),
        format!("{:.3}", r.test_s),
        r.params.to_string(),
    ]
}

fn text_table(rows: &[ReportRow]) -> String {
    let header = [
        "Method", "Network", "Acc(%)", "Pre(%)", "Rec(%)", "F1(%)", "DR bio(s)", "DR land(s)", "Train(s)",
        "Test(s)", "Params",
    ];
    let body: Vec<[String; 11]> = rows.iter().map(cells).collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |items: Vec<&str>| {
        let parts: Vec<String> = items
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (c, &w))| if k < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in &body {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

/// Renders the benchmark as CSV, aligned text or JSON with fold detail.
pub fn emit_report(report: &BenchmarkReport, format: ReportFormat) -> Result<String> {
    let rows = report_rows(report);
    Ok(match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &rows {
                writeln!(out, "{}", cells(r).join(",")).expect("string write");
            }
            out
        }
        ReportFormat::Text => text_table(&rows),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
    })
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<&str> = CSV_HEADER.split(',').collect();
    if reader.headers()?.iter().collect::<Vec<_>>() != header {
        return Err(Error::Format(format!("report header must be {CSV_HEADER}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
