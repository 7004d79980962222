use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, PoolState, Result, SampleId};

fn default_true() -> bool {
    true
}

/// Train/validation/test fractions. The training share becomes the active-learning cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            validation_fraction: 0.2,
            test_fraction: 0.2,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [
            self.train_fraction,
            self.validation_fraction,
            self.test_fraction,
        ];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(DataError::InvalidSplit(format!(
                "fractions must lie in (0, 1), got {fr:?}"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// (validation, test) counts for a group of `m` samples; training takes the rest.
    fn allocate(&self, m: usize) -> (usize, usize) {
        let val = ((self.validation_fraction * m as f64).round() as usize).min(m);
        let test = ((self.test_fraction * m as f64).round() as usize).min(m - val);
        (val, test)
    }
}

/// Splits every sample into training cohort (all unlabeled), validation and test.
///
/// With `stratified`, each class is split on its own so class proportions carry over to
/// every split. Rows without a label cannot be evaluated and always join the cohort.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<PoolState> {
    spec.validate()?;
    let mut groups: BTreeMap<Option<usize>, Vec<SampleId>> = BTreeMap::new();
    if spec.stratified {
        for (&id, &label) in dataset.ids().iter().zip(dataset.labels()) {
            groups.entry(label).or_default().push(id);
        }
    } else {
        groups.insert(None, dataset.ids().to_vec());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool = PoolState::default();
    for (label, mut ids) in groups {
        if spec.stratified && label.is_none() {
            pool.unlabeled.extend(ids);
            continue;
        }
        let (n_val, n_test) = spec.allocate(ids.len());
        let n_train = ids.len() - n_val - n_test;
        if spec.stratified && (n_val == 0 || n_test == 0 || n_train == 0) {
            return Err(DataError::InsufficientSamples(format!(
                "class {} has {} samples, too few for a {}/{}/{} split",
                label.unwrap_or_default(),
                ids.len(),
                spec.train_fraction,
                spec.validation_fraction,
                spec.test_fraction
            )));
        }
        ids.shuffle(&mut rng);
        pool.validation.extend(&ids[..n_val]);
        pool.test.extend(&ids[n_val..n_val + n_test]);
        pool.unlabeled.extend(&ids[n_val + n_test..]);
    }
    if pool.unlabeled.is_empty() {
        return Err(DataError::InsufficientSamples(
            "training cohort would be empty".into(),
        ));
    }
    Ok(pool)
}

/// Undersamples every labeled class to the size of the smallest one. Unlabeled rows are kept.
pub fn balance(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = dataset.class_counts();
    let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.len() < 2 {
        return Err(DataError::SingleClass);
    }
    let target = *present.iter().min().unwrap_or(&0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; dataset.len()];
    for class in 0..dataset.class_count() {
        let rows: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels()[i] == Some(class))
            .collect();
        if rows.len() <= target {
            rows.iter().for_each(|&i| keep[i] = true);
        } else {
            rows.choose_multiple(&mut rng, target)
                .for_each(|&i| keep[i] = true);
        }
    }
    for (i, l) in dataset.labels().iter().enumerate() {
        if l.is_none() {
            keep[i] = true;
        }
    }
    let rows: Vec<usize> = (0..dataset.len()).filter(|&i| keep[i]).collect();
    dataset.take_rows(&rows)
}
