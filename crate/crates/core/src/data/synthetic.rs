use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, Dataset, Result};
use crate::matrix::Matrix;

/// Isotropic Gaussian blobs, `n_per_class` samples around each mean, class by class.
///
/// `stddev == 0` is accepted and places every sample exactly on its class mean.
pub fn generate_synthetic(
    n_per_class: usize,
    means: &[Vec<f64>],
    stddev: f64,
    seed: u64,
) -> Result<Dataset> {
    if means.len() < 2 {
        return Err(DataError::InvalidParameter(
            "need at least two class means".into(),
        ));
    }
    if !(stddev >= 0.0 && stddev.is_finite()) {
        return Err(DataError::InvalidParameter(format!(
            "stddev must be finite and >= 0, got {stddev}"
        )));
    }
    let dim = means[0].len();
    if dim == 0 {
        return Err(DataError::DimensionMismatch {
            class: 0,
            expected: 1,
            found: 0,
        });
    }
    if let Some((class, m)) = means.iter().enumerate().find(|(_, m)| m.len() != dim) {
        return Err(DataError::DimensionMismatch {
            class,
            expected: dim,
            found: m.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * means.len();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for &mu in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(mu + stddev * z);
            }
            labels.push(Some(class));
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, data), labels, means.len())
}
