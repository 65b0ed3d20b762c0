use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::run::{ResultRow, ResultsTable};

pub const RESULTS_HEADER: [&str; 8] = [
    "instance_id",
    "algorithm",
    "trial",
    "seed",
    "samples",
    "correct",
    "recommended",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub mean_samples: f64,
    pub std_samples: f64,
    pub success_rate: f64,
    pub n: usize,
    /// Trials stopped by a safety cap.
    pub capped: Vec<usize>,
    /// Trials that ended with any other error.
    pub failed: Vec<usize>,
}

/// Keyed by algorithm, or by `algorithm@instance` when the table spans several instances.
pub type Summary = BTreeMap<String, SummaryEntry>;

pub(crate) fn summary_key(table: &ResultsTable, row: &ResultRow) -> String {
    let multi = table
        .rows
        .iter()
        .any(|r| r.instance_id != table.rows[0].instance_id);
    if multi {
        format!("{}@{}", row.algorithm, row.instance_id)
    } else {
        row.algorithm.clone()
    }
}

pub fn summarize(table: &ResultsTable) -> Summary {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        groups.entry(summary_key(table, row)).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(key, idx)| {
            let n = idx.len();
            let samples: Vec<f64> = idx.iter().map(|&i| table.rows[i].samples as f64).collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let successes = idx.iter().filter(|&&i| table.rows[i].correct).count();
            let trials_where = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> {
                idx.iter()
                    .filter(|&&i| pred(i))
                    .map(|&i| table.rows[i].trial)
                    .collect()
            };
            let detail = |i: usize| table.details.get(i);
            let entry = SummaryEntry {
                mean_samples: mean,
                std_samples: var.sqrt(),
                success_rate: successes as f64 / n as f64,
                n,
                capped: trials_where(&|i| detail(i).is_some_and(|d| d.capped)),
                failed: trials_where(&|i| {
                    detail(i).is_some_and(|d| !d.capped && d.failure.is_some())
                }),
            };
            (key, entry)
        })
        .collect()
}

/// Writes the fixed-header CSV; an empty table yields the header alone.
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-._".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `results.csv`, `summary.json` and, when asked, one trace JSONL per trial.
/// Returns the paths written.
pub fn write_outputs(table: &ResultsTable, dir: &Path, traces: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let csv_path = dir.join("results.csv");
    write_results_csv(&table.rows, &csv_path)?;
    written.push(csv_path);

    let summary_path = dir.join("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summarize(table))? + "\n",
    )?;
    written.push(summary_path);

    if traces {
        let trace_dir = dir.join("traces");
        fs::create_dir_all(&trace_dir)?;
        for (row, detail) in table.rows.iter().zip(&table.details) {
            if let Some(trace) = &detail.trace {
                let name = format!(
                    "{}__{}__{}.jsonl",
                    file_safe(&row.instance_id),
                    file_safe(&row.algorithm),
                    row.trial
                );
                let path = trace_dir.join(name);
                fs::write(&path, trace.to_jsonl()?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
