//! Grouped summaries of run records as text and CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::factorial::CANONICAL_FACTORS;
use super::runner::{RunRecord, METRICS};
use super::stats::{mean_sem, MeanSem};
use crate::corpus::write_file;
use crate::metrics::ConfusionMatrix3;
use crate::{Error, Result};

/// Columns shown in the plain-text table; CSV carries every metric.
pub const TEXT_COLUMNS: [&str; 8] = [
    "accuracy",
    "rouge1_recall",
    "rouge2_recall",
    "rougeL_f1",
    "rougeLsum_f1",
    "bert_precision",
    "bert_recall",
    "bert_f1",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// One level per grouping factor.
    pub key: Vec<String>,
    pub runs: usize,
    /// Mean and SEM over the runs' own means.
    pub metrics: BTreeMap<String, MeanSem>,
    pub confusion: ConfusionMatrix3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub group_by: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Groups runs by the given factor codes; rows keep first-seen order.
pub fn aggregate(records: &[RunRecord], group_by: &[&str]) -> Result<ReportTable> {
    if records.is_empty() {
        return Err(Error::invalid("no run records to aggregate"));
    }
    let mut order: Vec<Vec<String>> = Vec::new();
    let mut groups: BTreeMap<Vec<String>, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key: Vec<String> = group_by.iter().map(|c| r.config().group_level(c)).collect();
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let runs = &groups[&key];
            let mut metrics = BTreeMap::new();
            for name in METRICS {
                let means: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.aggregate.metrics.get(name).map(|m| m.mean))
                    .collect();
                if let Some(s) = mean_sem(&means) {
                    metrics.insert(name.to_string(), s);
                }
            }
            let mut confusion = ConfusionMatrix3::default();
            for r in runs {
                confusion.merge(r.aggregate.confusion());
            }
            ReportRow { key, runs: runs.len(), metrics, confusion }
        })
        .collect();
    Ok(ReportTable { group_by: group_by.iter().map(|c| c.to_string()).collect(), rows })
}

fn cell(m: Option<&MeanSem>) -> String {
    match m {
        Some(m) if m.degenerate() => format!("{:.4} ± 0 (n=1)", m.mean),
        Some(m) => format!("{:.4} ± {:.4}", m.mean, m.sem),
        None => "-".into(),
    }
}

impl ReportTable {
    pub fn render_text(&self) -> String {
        let mut header: Vec<String> = self.group_by.clone();
        header.push("runs".into());
        header.extend(TEXT_COLUMNS.iter().map(|c| c.to_string()));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = row.key.clone();
                cells.push(row.runs.to_string());
                cells.extend(TEXT_COLUMNS.iter().map(|c| cell(row.metrics.get(*c))));
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].chars().count())
                    .chain([header[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        out += &line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for r in &body {
            out += &line(r);
        }
        for row in &self.rows {
            out += &format!("\nconfusion [{}]\n", row.key.join("-"));
            out += &row.confusion.render();
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = self.group_by.clone();
        header.push("runs".into());
        for m in METRICS {
            header.extend([format!("{m}_mean"), format!("{m}_sem"), format!("{m}_n")]);
        }
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = row.key.clone();
            rec.push(row.runs.to_string());
            for m in METRICS {
                match row.metrics.get(m) {
                    Some(s) => rec.extend([s.mean.to_string(), s.sem.to_string(), s.n.to_string()]),
                    None => rec.extend([String::new(), String::new(), "0".into()]),
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Every item of every run as one row, with factor levels as columns, for
/// external statistical tooling.
pub fn items_csv(records: &[RunRecord]) -> Result<String> {
    let mut codes: Vec<String> = CANONICAL_FACTORS.iter().map(|c| c.to_string()).collect();
    for r in records {
        for l in &r.config().levels {
            if !codes.contains(&l.code) {
                codes.push(l.code.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["mnemonic".to_string(), "norag".into()];
    header.extend(codes.iter().cloned());
    header.extend(
        ["item_id", "question_type", "status", "gold_short", "predicted_short"]
            .iter()
            .map(|s| s.to_string()),
    );
    header.extend(METRICS.iter().map(|m| m.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let cfg = r.config();
        for item in &r.items {
            let mut rec = vec![cfg.mnemonic.clone(), cfg.norag.to_string()];
            rec.extend(codes.iter().map(|c| cfg.group_level(c)));
            rec.extend([
                item.item_id.clone(),
                item.question_type.to_string(),
                if item.is_ok() { "ok".into() } else { "failed".into() },
                item.gold_short.to_string(),
                item.predicted_short.to_string(),
            ]);
            rec.extend(METRICS.iter().map(|m| item.metric(m).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

/// Writes `report.txt`, `report.csv` and `items.csv` into `dir`.
pub fn write_report(dir: &Path, records: &[RunRecord], group_by: &[&str]) -> Result<Vec<PathBuf>> {
    let table = aggregate(records, group_by)?;
    let files = [
        (dir.join("report.txt"), table.render_text()),
        (dir.join("report.csv"), table.to_csv()?),
        (dir.join("items.csv"), items_csv(records)?),
    ];
    let mut written = Vec::new();
    for (path, text) in files {
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
