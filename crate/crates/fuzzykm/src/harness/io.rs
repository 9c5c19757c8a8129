//! Dataset and target/result file formats.
//!
//! Datasets are headered CSV with float feature columns and an optional
//! label column. Targets and solver results are JSON with an explicit
//! schema-version field.

use super::HarnessError;
use crate::core::{Clustering, Dataset, MembershipMatrix};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

/// Writes a dataset (and labels, if given) as headered CSV with columns
/// `f0..f{d-1}` plus `label`.
pub fn save_dataset_csv(
    path: &Path,
    x: &Dataset,
    labels: Option<&[usize]>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..x.dim()).map(|t| format!("f{t}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, p) in x.points().iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a headered CSV of float features; `label_column`, when given, is
/// extracted as class labels (integers directly, anything else mapped by
/// first appearance).
pub fn load_csv(
    path: &Path,
    label_column: Option<&str>,
) -> Result<(Dataset, Option<Vec<usize>>), HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| HarnessError::Config(format!("no column named `{name}`")))?,
        ),
        None => None,
    };
    let mut points = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut p = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            if Some(col) == label_idx {
                raw_labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| HarnessError::Parse {
                row: row + 2, // 1-based, counting the header
                column: headers.get(col).unwrap_or("?").to_string(),
                value: field.to_string(),
            })?;
            p.push(v);
        }
        points.push(p);
    }
    let labels = label_idx.map(|_| coerce_labels(&raw_labels));
    Ok((Dataset::new(points)?, labels))
}

fn coerce_labels(raw: &[String]) -> Vec<usize> {
    if let Ok(ints) = raw
        .iter()
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
    {
        return ints;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = seen.len();
            *seen.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Number of distinct labels.
pub fn label_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// On-disk form of a target clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetFile {
    pub schema_version: u32,
    pub alpha: f64,
    pub mode: String,
    /// Whether the target passed the consistency check at construction.
    pub strict: bool,
    pub centers: Vec<Vec<f64>>,
    pub memberships: Vec<Vec<f64>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TargetFile {
    pub fn new(
        clustering: &Clustering,
        alpha: f64,
        mode: &str,
        strict: bool,
        warnings: Vec<String>,
    ) -> Self {
        Self {
            schema_version: 1,
            alpha,
            mode: mode.into(),
            strict,
            centers: clustering.centers().to_vec(),
            memberships: clustering.memberships().rows().to_vec(),
            warnings,
        }
    }

    pub fn clustering(&self) -> Result<Clustering, HarnessError> {
        Ok(Clustering::new(
            self.centers.clone(),
            MembershipMatrix::new(self.memberships.clone())?,
        )?)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let file: TargetFile = serde_json::from_str(&text)?;
        if file.schema_version != 1 {
            return Err(HarnessError::Config(format!(
                "unsupported target schema version {}",
                file.schema_version
            )));
        }
        Ok(file)
    }
}
