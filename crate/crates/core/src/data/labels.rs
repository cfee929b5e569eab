//! Label CSV files: header `id,label`, one row per embedding row.
//!
//! Labels are integer class ids. A sidecar `<stem>.classes.json` records the
//! class count and optional names; without it the class count is inferred
//! from the largest id. Non-integer labels are accepted as class names and
//! mapped to ids in sorted order.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LabelVector;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ClassInfo {
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.classes.json"))
}

/// Reads a label CSV. Returns the id column (`None` when every id is empty)
/// and the labels.
pub fn read_labels(path: &Path) -> Result<(Option<Vec<String>>, LabelVector)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected header `id,label`, found `{}`", headers.as_slice()),
        });
    }
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        ids.push(record[0].to_string());
        raw.push(record[1].trim().to_string());
    }

    let sidecar = sidecar_path(path);
    let info: Option<ClassInfo> = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::json(&sidecar, e))?)
    } else {
        None
    };

    let parsed: Option<Vec<i64>> = raw.iter().map(|s| s.parse::<i64>().ok()).collect();
    let labels = match parsed {
        Some(values) => {
            if let Some((row, &label)) = values.iter().enumerate().find(|(_, &v)| v < 0) {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    num_classes: info.as_ref().map_or(0, |i| i.num_classes),
                });
            }
            let max = values.iter().copied().max().unwrap_or(0) as usize;
            let num_classes = info.as_ref().map_or((max + 1).max(2), |i| i.num_classes);
            let labels =
                LabelVector::new(values.into_iter().map(|v| v as usize).collect(), num_classes)?;
            match info.and_then(|i| i.class_names) {
                Some(names) => labels.with_class_names(names)?,
                None => labels,
            }
        }
        None => {
            let names: Vec<String> = match info.and_then(|i| i.class_names) {
                Some(names) => names,
                None => raw
                    .iter()
                    .cloned()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            let mut values = Vec::with_capacity(raw.len());
            for (row, s) in raw.iter().enumerate() {
                match names.iter().position(|n| n == s) {
                    Some(v) => values.push(v),
                    None => {
                        return Err(Error::Malformed {
                            path: path.to_path_buf(),
                            reason: format!("row {row}: unknown class name `{s}`"),
                        })
                    }
                }
            }
            let num_classes = names.len().max(2);
            let mut names = names;
            names.resize(num_classes, String::new());
            LabelVector::new(values, num_classes)?.with_class_names(names)?
        }
    };

    let ids = if ids.iter().all(|s| s.is_empty()) {
        None
    } else {
        Some(ids)
    };
    Ok((ids, labels))
}

/// Writes labels as `id,label` plus the class sidecar. Missing ids are
/// written as empty fields.
pub fn write_labels(path: &Path, ids: Option<&[String]>, labels: &LabelVector) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(["id", "label"]).map_err(csv_err)?;
    for (i, label) in labels.values().iter().enumerate() {
        let id = ids.map(|ids| ids[i].as_str()).unwrap_or("");
        writer
            .write_record([id, &label.to_string()])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;

    let info = ClassInfo {
        num_classes: labels.num_classes(),
        class_names: labels.class_names().map(|n| n.to_vec()),
    };
    let sidecar = sidecar_path(path);
    let text = serde_json::to_string_pretty(&info).map_err(|e| Error::json(&sidecar, e))?;
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
}
