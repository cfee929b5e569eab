use std::path::{Path, PathBuf};

use super::svg::{ramp, Chart, Series};
use crate::error::{Error, Result};
use crate::ranking::{angle, SweepReport};
use crate::sobol::ImportancePair;

pub const SWEEP_CSV_HEADER: &str = "k,task_acc,sensitive_acc,removed_indices";

/// One line per record; removed indices are `;`-separated.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let removed: Vec<String> = r.removed_indices.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.k,
            r.task_accuracy,
            r.sensitive_accuracy,
            removed.join(";")
        ));
    }
    out
}

pub fn sweep_json(report: &SweepReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map(|s| s + "\n")
        .map_err(|e| Error::Validation(e.to_string()))
}

pub fn coimportance_svg(pairs: &[ImportancePair]) -> String {
    let points: Vec<(f64, f64)> = pairs.iter().map(|p| (p.s_task, p.s_sensitive)).collect();
    let colors: Vec<String> = pairs
        .iter()
        .map(|p| ramp(angle(p.s_task, p.s_sensitive).unwrap_or(0.0) / 90.0))
        .collect();
    Chart {
        title: "Concept co-importance".into(),
        x_label: "task importance".into(),
        y_label: "sensitive importance".into(),
        series: vec![Series {
            name: "concept".into(),
            color: "#555555".into(),
            points,
            labels: pairs.iter().map(|p| p.concept_index.to_string()).collect(),
            line: false,
        }],
        point_colors: vec![colors],
    }
    .render()
}

pub fn tradeoff_svg(report: &SweepReport) -> String {
    let base = report.records.first().map_or(0.0, |r| r.sensitive_accuracy);
    let points = report
        .records
        .iter()
        .map(|r| (100.0 * (base - r.sensitive_accuracy), 100.0 * r.task_accuracy))
        .collect();
    Chart {
        title: "Task accuracy against sensitive accuracy drop".into(),
        x_label: "sensitive accuracy drop (points)".into(),
        y_label: "task accuracy (%)".into(),
        series: vec![Series {
            name: "k".into(),
            color: "#268bd2".into(),
            points,
            labels: report.records.iter().map(|r| format!("k={}", r.k)).collect(),
            line: true,
        }],
        point_colors: vec![],
    }
    .render()
}

pub fn accuracy_drop_svg(report: &SweepReport) -> String {
    let curve = |f: &dyn Fn(&crate::ranking::SweepRecord) -> f64| -> Vec<(f64, f64)> {
        report.records.iter().map(|r| (r.k as f64, 100.0 * f(r))).collect()
    };
    Chart {
        title: "Accuracy as concepts are removed".into(),
        x_label: "k (concepts removed)".into(),
        y_label: "test accuracy (%)".into(),
        series: vec![
            Series {
                name: "task".into(),
                color: "#268bd2".into(),
                points: curve(&|r| r.task_accuracy),
                labels: vec![],
                line: true,
            },
            Series {
                name: "sensitive".into(),
                color: "#dc322f".into(),
                points: curve(&|r| r.sensitive_accuracy),
                labels: vec![],
                line: true,
            },
        ],
        point_colors: vec![],
    }
    .render()
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes `sweep.csv`, `sweep.json`, `tradeoff.svg`, `accuracy_drop.svg`
/// and, given importances, `coimportance.svg` into `dir`.
pub fn write_report(
    dir: &Path,
    report: &SweepReport,
    pairs: Option<&[ImportancePair]>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write(dir.join("sweep.csv"), &sweep_csv(report), &mut written)?;
    write(dir.join("sweep.json"), &sweep_json(report)?, &mut written)?;
    if let Some(pairs) = pairs {
        write(dir.join("coimportance.svg"), &coimportance_svg(pairs), &mut written)?;
    }
    write(dir.join("tradeoff.svg"), &tradeoff_svg(report), &mut written)?;
    write(dir.join("accuracy_drop.svg"), &accuracy_drop_svg(report), &mut written)?;
    Ok(written)
}
