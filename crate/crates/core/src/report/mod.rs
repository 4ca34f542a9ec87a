//! Result files, disparity summaries and severity-curve plots.
//!
//! A result directory holds:
//!
//! * `results.csv`: long format, one row per (class, subgroup, condition,
//!   metric), sorted lexicographically on the key columns. Undefined cells
//!   hold `NA`, cells of failed passes hold `FAILED`.
//! * `metadata.json`: [`RunMetadata`] plus the plot settings.

mod disparity;
mod svg;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::{kind_name, sort_rows, ResultTable, RunMetadata};
use crate::metrics::{MetricResult, MetricValue};
use crate::perturb::PerturbationKind;
use crate::{Error, Result};

pub use disparity::{disparity_row, disparity_table, round_gap, write_disparity, DisparityRow};
pub use svg::{emit_plots, render_chart, PlotSettings};

pub const RESULTS_FILE: &str = "results.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const RESULTS_VERSION_LINE: &str = "# stressbench-results v1";
pub const RESULTS_HEADER: [&str; 8] = [
    "dataset", "class", "subgroup", "kind", "level", "metric", "value", "n",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub run: RunMetadata,
    pub plot: PlotSettings,
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: MetricValue) -> String {
    match v {
        MetricValue::Defined(x) => format!("{x}"),
        MetricValue::Undefined => "NA".into(),
        MetricValue::Failed => "FAILED".into(),
    }
}

pub fn parse_value(s: &str) -> Result<MetricValue> {
    match s {
        "NA" => Ok(MetricValue::Undefined),
        "FAILED" => Ok(MetricValue::Failed),
        _ => s
            .parse::<f64>()
            .map(MetricValue::Defined)
            .map_err(|_| Error::InvalidParameter(format!("bad metric value `{s}`"))),
    }
}

/// Serializes rows in canonical order to CSV text.
pub fn results_csv(rows: &[MetricResult]) -> Result<String> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let err = |e: csv::Error| Error::csv(RESULTS_FILE, e);
    w.write_record(RESULTS_HEADER).map_err(err)?;
    for r in &rows {
        w.write_record([
            r.dataset.as_str(),
            r.class.as_str(),
            r.subgroup.as_str(),
            kind_name(r.kind),
            &r.level.to_string(),
            r.metric.as_str(),
            &format_value(r.value),
            &r.n.to_string(),
        ])
        .map_err(err)?;
    }
    let body = w.into_inner().map_err(|e| Error::io("flushing csv", e.into_error()))?;
    Ok(format!(
        "{RESULTS_VERSION_LINE}\n{}",
        String::from_utf8(body).expect("csv output is utf-8")
    ))
}

pub fn parse_results_csv(text: &str, path: &str) -> Result<Vec<MetricResult>> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_VERSION_LINE) {
        return Err(Error::InvalidParameter(format!(
            "{path}: missing `{RESULTS_VERSION_LINE}` header"
        )));
    }
    let body = &text[RESULTS_VERSION_LINE.len() + 1..];
    let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::InvalidParameter(format!("{path}: unexpected columns")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| {
            Error::InvalidParameter(format!("{path}: row {}: bad {what}", i + 1))
        };
        let kind = match &rec[3] {
            "clean" => None,
            k => Some(k.parse::<PerturbationKind>().map_err(|_| bad("kind"))?),
        };
        rows.push(MetricResult {
            dataset: rec[0].to_string(),
            class: rec[1].to_string(),
            subgroup: rec[2].to_string(),
            kind,
            level: rec[4].parse().map_err(|_| bad("level"))?,
            metric: rec[5].parse().map_err(|_| bad("metric"))?,
            value: parse_value(&rec[6])?,
            n: rec[7].parse().map_err(|_| bad("n"))?,
        });
    }
    Ok(rows)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes `results.csv` and `metadata.json` into `dir`.
pub fn write_results(rt: &ResultTable, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let csv_path = dir.join(RESULTS_FILE);
    write_file(&csv_path, results_csv(&rt.rows)?.as_bytes())?;
    let meta = ReportMetadata {
        run: rt.meta.clone(),
        plot: PlotSettings::default(),
    };
    let meta_path = dir.join(METADATA_FILE);
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    write_file(&meta_path, json.as_bytes())?;
    Ok(vec![csv_path, meta_path])
}

pub fn read_results(dir: impl AsRef<Path>) -> Result<ResultTable> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(format!("reading {}", p.display()), e))
    };
    let rows = parse_results_csv(&read(RESULTS_FILE)?, &dir.join(RESULTS_FILE).display().to_string())?;
    let meta: ReportMetadata = serde_json::from_str(&read(METADATA_FILE)?)?;
    Ok(ResultTable {
        rows,
        meta: meta.run,
    })
}
