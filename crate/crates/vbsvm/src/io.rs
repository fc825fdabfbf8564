//! CSV ingestion and emission.
//!
//! The data format is a plain headered CSV: one label column (values in
//! -1/+1 or 0/1), an optional group column (arbitrary identifiers), and
//! numeric predictor columns in header order. Missing predictor values are
//! empty cells. The same format is used for simulated output, so a
//! simulated file round-trips through ingestion unchanged.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{GroupInfo, LabeledDataset};
use crate::error::{Error, Result};

/// Read a dataset from CSV. `label_col` names the label column; `group_col`,
/// if given, names the group identifier column. Every other column is a
/// numeric predictor.
pub fn read_dataset_csv(
    path: &Path,
    label_col: &str,
    group_col: Option<&str>,
) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_col)
        .ok_or_else(|| Error::Data(format!("label column '{label_col}' not found in header")))?;
    let group_idx = match group_col {
        Some(g) => Some(
            headers
                .iter()
                .position(|h| h == g)
                .ok_or_else(|| Error::Data(format!("group column '{g}' not found in header")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| j != label_idx && Some(j) != group_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Data("no predictor columns in file".to_string()));
    }

    let mut raw_labels: Vec<f64> = Vec::new();
    let mut group_ids: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let lab = record
            .get(label_idx)
            .ok_or_else(|| Error::Data(format!("row {line}: missing label field")))?
            .trim();
        let lab: f64 = lab
            .parse()
            .map_err(|_| Error::Data(format!("row {line}: label '{lab}' is not numeric")))?;
        raw_labels.push(lab);
        if let Some(gi) = group_idx {
            group_ids.push(record.get(gi).unwrap_or("").trim().to_string());
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            let cell = record.get(j).unwrap_or("").trim();
            if cell.is_empty() {
                row.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {line}, column '{}': '{cell}' is not numeric",
                        headers[j]
                    ))
                })?;
                if v.is_nan() {
                    return Err(Error::Data(format!(
                        "row {line}, column '{}': literal NaN not allowed; use an empty cell",
                        headers[j]
                    )));
                }
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("file contains no data rows".to_string()));
    }

    let labels = normalize_labels(&raw_labels)?;
    let n = rows.len();
    let d = feature_cols.len();
    let features = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let feature_names = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    let groups = if group_idx.is_some() {
        Some(GroupInfo::from_ids(&group_ids))
    } else {
        None
    };
    LabeledDataset::new(features, DVector::from_vec(labels), feature_names, groups)
}

/// Map raw label values onto -1/+1. Accepts the -1/+1 and 0/1 encodings;
/// anything else is a data error.
fn normalize_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let zero_one = raw.iter().all(|&v| v == 0.0 || v == 1.0);
    let pm_one = raw.iter().all(|&v| v == -1.0 || v == 1.0);
    if zero_one && raw.iter().any(|&v| v == 0.0) {
        Ok(raw.iter().map(|&v| 2.0 * v - 1.0).collect())
    } else if pm_one {
        Ok(raw.to_vec())
    } else {
        Err(Error::Data(
            "labels must use the -1/+1 or 0/1 encoding".to_string(),
        ))
    }
}

/// Write a dataset in the ingestion format (label column `y`, optional group
/// column `group`, predictors by name, missing cells empty).
pub fn write_dataset_csv(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    if data.groups.is_some() {
        header.push("group".to_string());
    }
    header.extend(data.feature_names.iter().cloned());
    writer.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut record = vec![format_label(data.labels[i])];
        if let Some(g) = &data.groups {
            record.push(g.names[g.index[i]].clone());
        }
        for j in 0..data.n_features() {
            let v = data.features[(i, j)];
            record.push(if v.is_nan() { String::new() } else { format!("{v}") });
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn format_label(y: f64) -> String {
    if y > 0.0 { "1".to_string() } else { "-1".to_string() }
}

/// Write predicted labels (and optional real-valued scores) as CSV.
pub fn write_predictions_csv(
    path: &Path,
    labels: &DVector<f64>,
    scores: Option<&DVector<f64>>,
) -> Result<()> {
    if let Some(s) = scores {
        if s.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} scores for {} labels",
                s.len(),
                labels.len()
            )));
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    match scores {
        Some(s) => {
            writer.write_record(["label", "score"])?;
            for i in 0..labels.len() {
                writer.write_record([format_label(labels[i]), format!("{}", s[i])])?;
            }
        }
        None => {
            writer.write_record(["label"])?;
            for i in 0..labels.len() {
                writer.write_record([format_label(labels[i])])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Read feature rows for prediction against a known training schema.
///
/// The header must contain every name in `feature_names` (matched by name,
/// any column order); `group_col`, when given, names the group-id column;
/// columns listed in `ignore_cols` (typically a label column) are skipped.
/// Any other column is a schema mismatch. Empty cells become NaN. Returns
/// the feature matrix in `feature_names` order and the group ids, if read.
pub fn read_features_csv(
    path: &Path,
    feature_names: &[String],
    group_col: Option<&str>,
    ignore_cols: &[&str],
) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut feature_idx = Vec::with_capacity(feature_names.len());
    for name in feature_names {
        let j = headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "feature column '{name}' from the training schema not found in header"
            ))
        })?;
        feature_idx.push(j);
    }
    let group_idx = match group_col {
        Some(g) => Some(
            headers
                .iter()
                .position(|h| h == g)
                .ok_or_else(|| Error::Data(format!("group column '{g}' not found in header")))?,
        ),
        None => None,
    };
    for (j, h) in headers.iter().enumerate() {
        let known = feature_idx.contains(&j)
            || Some(j) == group_idx
            || ignore_cols.iter().any(|c| c == h);
        if !known {
            return Err(Error::Data(format!(
                "column '{h}' is not part of the training schema ({} features expected)",
                feature_names.len()
            )));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut group_ids: Vec<String> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(feature_idx.len());
        for (k, &j) in feature_idx.iter().enumerate() {
            let cell = record.get(j).unwrap_or("").trim();
            if cell.is_empty() {
                row.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {line}, column '{}': '{cell}' is not numeric",
                        feature_names[k]
                    ))
                })?;
                row.push(v);
            }
        }
        rows.push(row);
        if let Some(gi) = group_idx {
            group_ids.push(record.get(gi).unwrap_or("").trim().to_string());
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("file contains no data rows".to_string()));
    }
    let n = rows.len();
    let d = feature_names.len();
    let features = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let groups = group_idx.map(|_| group_ids);
    Ok((features, groups))
}

/// Read a one-column CSV of externally produced labels (header ignored),
/// aligned row-by-row with a dataset. Used for baseline comparisons.
pub fn read_labels_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut raw = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record
            .get(0)
            .ok_or_else(|| Error::Data(format!("row {line}: empty record")))?
            .trim();
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::Data(format!("row {line}: label '{cell}' is not numeric")))?;
        raw.push(v);
    }
    if raw.is_empty() {
        return Err(Error::Data("label file contains no rows".to_string()));
    }
    normalize_labels(&raw)
}
