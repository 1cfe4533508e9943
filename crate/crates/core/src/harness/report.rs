use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::MetricsReport;

pub const PER_TASK_HEADER: [&str; 7] = [
    "seed",
    "method",
    "task_id",
    "tet_s",
    "energy_j",
    "deadline_s",
    "met_deadline",
];

pub const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "mean_tet",
    "p95_tet",
    "mean_energy",
    "completion_rate",
    "mean_objective",
];

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Writes `per_task.csv`, `summary.csv` and `report.json` into `dir`,
/// creating it if needed. Returns the paths written.
pub fn emit_report(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let per_task = dir.join("per_task.csv");
    let mut w = writer(&per_task)?;
    w.write_record(PER_TASK_HEADER)?;
    for run in &report.runs {
        for t in &run.tasks {
            w.write_record([
                run.seed.to_string(),
                run.method.to_string(),
                t.task_id.to_string(),
                t.tet.to_string(),
                t.energy.to_string(),
                t.deadline.to_string(),
                t.met_deadline.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&per_task, e))?;

    let summary = dir.join("summary.csv");
    let mut w = writer(&summary)?;
    w.write_record(SUMMARY_HEADER)?;
    for a in &report.aggregates {
        w.write_record([
            a.method.to_string(),
            a.tet.mean.to_string(),
            a.tet.p95.to_string(),
            a.energy.mean.to_string(),
            a.mean_completion_rate.to_string(),
            a.mean_objective.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&summary, e))?;

    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)? + "\n";
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;

    Ok(vec![per_task, summary, json])
}
