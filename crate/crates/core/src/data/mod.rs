//! Datasets, loaders and the labeled/unlabeled pool partition.

mod csv_io;
mod idx;
mod preprocess;
mod split;
mod synthetic;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use csv_io::{load_csv, parse_csv, write_csv};
pub use idx::{encode_idx, load_idx, parse_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use preprocess::{normalize, FeatureStats};
pub use split::{balance, split, SplitSpec};
pub use synthetic::generate_synthetic;

/// Stable identifier of a sample inside a [`Dataset`].
pub type SampleId = u64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic {
        file: String,
        found: u32,
        expected: u32,
    },
    #[error("{file}: holds {found} items but {other_file} holds {expected}")]
    CountMismatch {
        file: String,
        found: usize,
        other_file: String,
        expected: usize,
    },
    #[error("{file}: truncated ({detail})")]
    TruncatedFile { file: String, detail: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: `{value}` is not a valid class label")]
    InvalidLabel { row: usize, value: String },
    #[error("class {class}: mean has dimension {found}, expected {expected}")]
    DimensionMismatch {
        class: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("balancing needs at least two labeled classes")]
    SingleClass,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DataError {
    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::BadMagic { .. } => "BAD_MAGIC",
            DataError::CountMismatch { .. } => "COUNT_MISMATCH",
            DataError::TruncatedFile { .. } => "TRUNCATED_FILE",
            DataError::MissingColumn(_) => "MISSING_COLUMN",
            DataError::NonNumericFeature { .. } => "NON_NUMERIC_FEATURE",
            DataError::InvalidLabel { .. } => "INVALID_LABEL",
            DataError::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            DataError::InvalidParameter(_) => "INVALID_PARAMETER",
            DataError::InvalidSplit(_) => "INVALID_SPLIT",
            DataError::InsufficientSamples(_) => "INSUFFICIENT_SAMPLES",
            DataError::SingleClass => "SINGLE_CLASS",
            DataError::InvalidDataset(_) => "INVALID_DATASET",
            DataError::Io { .. } => "IO_ERROR",
            DataError::Csv(_) => "CSV_ERROR",
        }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Feature matrix plus per-sample labels, identifiers and optional raw payloads.
///
/// A label of `None` means the class is unknown (an unlabeled row).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<Option<usize>>,
    class_count: usize,
    ids: Vec<SampleId>,
    payloads: Option<Vec<Vec<u8>>>,
    payload_dims: Option<(usize, usize)>,
    class_names: Option<Vec<String>>,
    index: HashMap<SampleId, usize>,
}

impl Dataset {
    /// Builds a dataset whose ids are the row indices `0..n`.
    pub fn new(features: Matrix, labels: Vec<Option<usize>>, class_count: usize) -> Result<Self> {
        let ids = (0..features.rows() as SampleId).collect();
        Self::with_ids(features, labels, class_count, ids)
    }

    pub fn with_ids(
        features: Matrix,
        labels: Vec<Option<usize>>,
        class_count: usize,
        ids: Vec<SampleId>,
    ) -> Result<Self> {
        let n = features.rows();
        if features.cols() == 0 {
            return Err(DataError::InvalidDataset(
                "need at least one feature".into(),
            ));
        }
        if class_count < 2 {
            return Err(DataError::InvalidDataset(
                "need at least two classes".into(),
            ));
        }
        if labels.len() != n || ids.len() != n {
            return Err(DataError::InvalidDataset(format!(
                "{n} feature rows, {} labels, {} ids",
                labels.len(),
                ids.len()
            )));
        }
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&l| l >= class_count).map(|l| (i, l)))
        {
            return Err(DataError::InvalidDataset(format!(
                "row {i}: label {l} outside 0..{class_count}"
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, &id) in ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(DataError::InvalidDataset(format!(
                    "duplicate sample id {id}"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            class_count,
            ids,
            payloads: None,
            payload_dims: None,
            class_names: None,
            index,
        })
    }

    /// Attaches one raw payload per sample, e.g. image bytes of `dims = (rows, cols)`.
    pub fn with_payloads(
        mut self,
        payloads: Vec<Vec<u8>>,
        dims: Option<(usize, usize)>,
    ) -> Result<Self> {
        if payloads.len() != self.len() {
            return Err(DataError::InvalidDataset(format!(
                "{} payloads for {} samples",
                payloads.len(),
                self.len()
            )));
        }
        self.payloads = Some(payloads);
        self.payload_dims = dims;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(DataError::InvalidDataset(format!(
                "{} class names for {} classes",
                names.len(),
                self.class_count
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn payloads(&self) -> Option<&[Vec<u8>]> {
        self.payloads.as_deref()
    }

    pub fn payload_dims(&self) -> Option<(usize, usize)> {
        self.payload_dims
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Row index of a sample id.
    pub fn index_of(&self, id: SampleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn label_of(&self, id: SampleId) -> Option<usize> {
        self.index_of(id).and_then(|i| self.labels[i])
    }

    pub fn row_of(&self, id: SampleId) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.features.row(i))
    }

    pub fn payload_of(&self, id: SampleId) -> Option<&[u8]> {
        let i = self.index_of(id)?;
        self.payloads.as_ref().map(|p| p[i].as_slice())
    }

    /// Feature rows for the given ids, in the given order. Unknown ids are skipped.
    pub fn gather(&self, ids: &[SampleId]) -> Matrix {
        let rows: Vec<usize> = ids.iter().filter_map(|&id| self.index_of(id)).collect();
        self.features.select_rows(&rows)
    }

    /// New dataset containing only the rows at `rows` (ids, payloads and names carried over).
    pub(crate) fn take_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let ids = rows.iter().map(|&i| self.ids[i]).collect();
        let mut out = Self::with_ids(features, labels, self.class_count, ids)?;
        if let Some(p) = &self.payloads {
            out.payloads = Some(rows.iter().map(|&i| p[i].clone()).collect());
            out.payload_dims = self.payload_dims;
        }
        out.class_names = self.class_names.clone();
        Ok(out)
    }

    /// Same samples with a replaced feature matrix.
    pub(crate) fn with_features(&self, features: Matrix) -> Self {
        debug_assert_eq!(features.rows(), self.len());
        Self {
            features,
            ..self.clone()
        }
    }

    /// Per-class counts of known labels.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for l in self.labels.iter().flatten() {
            counts[*l] += 1;
        }
        counts
    }
}

/// Partition of sample ids into labeled seed, unlabeled pool and held-out sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub labeled: BTreeSet<SampleId>,
    pub unlabeled: BTreeSet<SampleId>,
    pub validation: BTreeSet<SampleId>,
    pub test: BTreeSet<SampleId>,
}

impl PoolState {
    /// Labeled plus unlabeled ids, ascending.
    pub fn training_cohort(&self) -> BTreeSet<SampleId> {
        self.labeled.union(&self.unlabeled).copied().collect()
    }

    pub fn cohort_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Checks pairwise disjointness of the four sets.
    pub fn is_disjoint(&self) -> bool {
        let sets = [&self.labeled, &self.unlabeled, &self.validation, &self.test];
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if !a.is_disjoint(b) {
                    return false;
                }
            }
        }
        true
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len() + self.validation.len() + self.test.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_label_out_of_range() {
        let m = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        let err = Dataset::new(m, vec![Some(0), Some(2)], 2).unwrap_err();
        assert_eq!(err.code(), "INVALID_DATASET");
    }

    #[test]
    fn rejects_duplicate_ids() {
        let m = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        assert!(Dataset::with_ids(m, vec![Some(0), Some(1)], 2, vec![4, 4]).is_err());
    }

    #[test]
    fn lookups_follow_ids() {
        let m = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ds = Dataset::with_ids(m, vec![Some(1), None, Some(0)], 2, vec![10, 20, 30]).unwrap();
        assert_eq!(ds.row_of(20), Some(&[3.0, 4.0][..]));
        assert_eq!(ds.label_of(20), None);
        assert_eq!(ds.label_of(30), Some(0));
        assert_eq!(ds.gather(&[30, 10]).as_slice(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(ds.class_counts(), vec![1, 1]);
    }
}
