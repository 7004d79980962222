use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Result, SampleId};
use crate::matrix::Matrix;

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl FeatureStats {
    /// Fits statistics on the rows for `ids` (all rows when `None`).
    pub fn fit(dataset: &Dataset, ids: Option<&[SampleId]>) -> Result<Self> {
        let rows: Vec<usize> = match ids {
            Some(ids) => ids.iter().filter_map(|&id| dataset.index_of(id)).collect(),
            None => (0..dataset.len()).collect(),
        };
        if rows.len() < 2 {
            return Err(DataError::InsufficientSamples(format!(
                "normalisation needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let d = dataset.feature_count();
        let x = dataset.features();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in &rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let stddev = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, stddev })
    }

    /// Applies `(x - mean) / stddev`; constant features become 0.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if self.mean.len() != dataset.feature_count() {
            return Err(DataError::InvalidDataset(format!(
                "statistics for {} features, dataset has {}",
                self.mean.len(),
                dataset.feature_count()
            )));
        }
        let src = dataset.features();
        let mut out = Matrix::zeros(src.rows(), src.cols());
        for i in 0..src.rows() {
            for (j, (o, v)) in out.row_mut(i).iter_mut().zip(src.row(i)).enumerate() {
                let sd = self.stddev[j];
                *o = if is_constant(sd, self.mean[j]) {
                    0.0
                } else {
                    (v - self.mean[j]) / sd
                };
            }
        }
        Ok(dataset.with_features(out))
    }
}

fn is_constant(sd: f64, mean: f64) -> bool {
    sd <= 1e-12 * mean.abs().max(1.0)
}

/// Standardises every feature over the whole dataset and returns the statistics used.
pub fn normalize(dataset: &Dataset) -> Result<(Dataset, FeatureStats)> {
    let stats = FeatureStats::fit(dataset, None)?;
    Ok((stats.apply(dataset)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Dataset {
        let m = Matrix::from_vec(values.len(), 1, values.to_vec());
        Dataset::new(m, vec![Some(0); values.len()], 2).unwrap()
    }

    #[test]
    fn one_two_three() {
        let (d, stats) = normalize(&column(&[1.0, 2.0, 3.0])).unwrap();
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in d.features().as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((stats.stddev[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (d, _) = normalize(&column(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(d.features().as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn reapplying_stats_reproduces_training_rows() {
        let ds = column(&[0.5, -2.0, 7.25, 3.0]);
        let (d, stats) = normalize(&ds).unwrap();
        assert_eq!(stats.apply(&ds).unwrap(), d);
    }

    #[test]
    fn fit_on_subset_only() {
        let ds = column(&[0.0, 2.0, 100.0]);
        let stats = FeatureStats::fit(&ds, Some(&[0, 1])).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.apply(&ds).unwrap().features().get(2, 0), 99.0);
    }

    #[test]
    fn needs_two_rows() {
        assert!(normalize(&column(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn standardised_moments(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let ds = Dataset::new(Matrix::from_rows(&rows).unwrap(), vec![None; rows.len()], 2).unwrap();
            let (d, stats) = normalize(&ds).unwrap();
            let n = rows.len() as f64;
            for j in 0..3 {
                if is_constant(stats.stddev[j], stats.mean[j]) {
                    continue;
                }
                let col: Vec<f64> = (0..rows.len()).map(|i| d.features().get(i, j)).collect();
                let mu = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                prop_assert!(mu.abs() < 1e-9, "mean {}", mu);
                prop_assert!((var - 1.0).abs() < 1e-9, "var {}", var);
            }
        }
    }
}
