use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Dataset, Result};
use crate::matrix::Matrix;

/// Loads a headered CSV file. Every column except `label_column` is a feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(file, label_column)
}

/// Parses CSV from any reader. An empty label cell marks the sample as unlabeled.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn parse_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (i, name) in &feature_cols {
            let cell = record.get(*i).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumericFeature {
                row,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            data.push(v);
        }
        let cell = record.get(label_idx).unwrap_or("");
        if cell.is_empty() {
            labels.push(None);
        } else {
            let l: usize = cell.parse().map_err(|_| DataError::InvalidLabel {
                row,
                value: cell.to_string(),
            })?;
            labels.push(Some(l));
        }
    }
    let class_count = labels.iter().flatten().max().map_or(2, |&m| (m + 1).max(2));
    let n = labels.len();
    Dataset::new(
        Matrix::from_vec(n, feature_cols.len(), data),
        labels,
        class_count,
    )
}

/// Writes `f0..f{d-1}` feature columns followed by `label_column`.
///
/// Floats use the shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W, label_column: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..dataset.feature_count())
        .map(|j| format!("f{j}"))
        .collect();
    header.push(label_column.to_string());
    wtr.write_record(&header)?;
    for (row, label) in dataset.features().iter_rows().zip(dataset.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.map(|l| l.to_string()).unwrap_or_default());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| DataError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}
