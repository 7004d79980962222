//! Softmax classifiers (linear or one hidden `tanh` layer) trained by plain mini-batch SGD.

mod io;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SampleId;
use crate::matrix::Matrix;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC};
pub use train::{fine_tune, gather_labeled, train, TrainConfig, TrainMode};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sample {0} has no label")]
    UnlabeledSample(SampleId),
    #[error("label {label} at row {row} outside 0..{class_count}")]
    InvalidLabel {
        row: usize,
        label: usize,
        class_count: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed weight file: {0}")]
    MalformedWeights(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::UnlabeledSample(_) => "UNLABELED_SAMPLE",
            ModelError::InvalidLabel { .. } => "INVALID_LABEL",
            ModelError::ShapeMismatch(_) => "SHAPE_MISMATCH",
            ModelError::NonFiniteLoss { .. } => "NON_FINITE_LOSS",
            ModelError::InvalidConfig(_) => "INVALID_CONFIG",
            ModelError::MalformedWeights(_) => "MALFORMED_WEIGHTS",
            ModelError::Io { .. } => "IO_ERROR",
        }
    }
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Architecture {
    #[default]
    Linear,
    Mlp {
        hidden_units: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub class_count: usize,
    pub feature_count: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(ModelError::InvalidConfig("class_count must be >= 2".into()));
        }
        if self.feature_count < 1 {
            return Err(ModelError::InvalidConfig(
                "feature_count must be >= 1".into(),
            ));
        }
        if let Architecture::Mlp { hidden_units: 0 } = self.architecture {
            return Err(ModelError::InvalidConfig(
                "hidden_units must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of each layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.architecture {
            Architecture::Linear => vec![(self.feature_count, self.class_count)],
            Architecture::Mlp { hidden_units } => vec![
                (self.feature_count, hidden_units),
                (hidden_units, self.class_count),
            ],
        }
    }
}

/// Affine layer: `weights` is `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.bias
                .iter()
                .enumerate()
                .map(|(o, b)| b + dot(self.weights.row(o), input)),
        );
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax in place.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    config: ModelConfig,
    layers: Vec<Layer>,
}

impl Classifier {
    /// Seeded uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for w in layer.weights.as_mut_slice() {
                    *w = rng.random_range(-bound..=bound);
                }
                for b in &mut layer.bias {
                    *b = rng.random_range(-bound..=bound);
                }
                layer
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// All-zero weights; a linear model built this way predicts the uniform distribution.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flattened parameters in file order: per layer, row-major weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`Classifier::params`].
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.as_slice().len());
            l.weights.as_mut_slice().copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn check_features(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.feature_count {
            return Err(ModelError::ShapeMismatch(format!(
                "model expects {} features, input has {}",
                self.config.feature_count,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Pre-activation outputs of the final layer for one sample.
    pub(crate) fn logits(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
        match self.layers.as_slice() {
            [single] => single.forward_into(x, out),
            [hidden, output] => {
                hidden.forward_into(x, scratch);
                scratch.iter_mut().for_each(|v| *v = v.tanh());
                output.forward_into(scratch, out);
            }
            _ => unreachable!("classifiers have one or two layers"),
        }
    }

    /// Forward pass only: one softmax distribution per input row.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.check_features(x)?;
        let c = self.config.class_count;
        let mut out = Matrix::zeros(x.rows(), c);
        let (mut scratch, mut z) = (Vec::new(), Vec::with_capacity(c));
        for i in 0..x.rows() {
            self.logits(x.row(i), &mut scratch, &mut z);
            softmax_in_place(&mut z);
            out.row_mut(i).copy_from_slice(&z);
        }
        Ok(out)
    }

    /// Most probable class per row (lowest index on ties).
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(arch: Architecture, d: usize, c: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            class_count: c,
            feature_count: d,
            seed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Classifier::init(cfg(Architecture::Mlp { hidden_units: 5 }, 3, 2, 4)).unwrap();
        let b = Classifier::init(cfg(Architecture::Mlp { hidden_units: 5 }, 3, 2, 4)).unwrap();
        let bits = |m: &Classifier| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn linear_shapes() {
        let m = Classifier::init(cfg(Architecture::Linear, 4, 3, 0)).unwrap();
        assert_eq!(m.layers().len(), 1);
        assert_eq!(
            (m.layers()[0].weights.rows(), m.layers()[0].weights.cols()),
            (3, 4)
        );
        assert_eq!(m.layers()[0].bias.len(), 3);
    }

    #[test]
    fn mlp_shapes() {
        let m = Classifier::init(cfg(Architecture::Mlp { hidden_units: 8 }, 4, 2, 0)).unwrap();
        let shapes: Vec<_> = m
            .layers()
            .iter()
            .map(|l| (l.weights.rows(), l.weights.cols(), l.bias.len()))
            .collect();
        assert_eq!(shapes, vec![(8, 4, 8), (2, 8, 2)]);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let m = Classifier::init(cfg(Architecture::Mlp { hidden_units: 16 }, 9, 3, 1)).unwrap();
        assert!(m.layers()[0]
            .weights
            .as_slice()
            .iter()
            .all(|w| w.abs() <= 1.0 / 3.0));
        assert!(m.layers()[1]
            .weights
            .as_slice()
            .iter()
            .all(|w| w.abs() <= 0.25));
    }

    #[test]
    fn invalid_configs() {
        assert!(Classifier::init(cfg(Architecture::Linear, 0, 2, 0)).is_err());
        assert!(Classifier::init(cfg(Architecture::Linear, 2, 1, 0)).is_err());
        assert!(Classifier::init(cfg(Architecture::Mlp { hidden_units: 0 }, 2, 2, 0)).is_err());
    }

    #[test]
    fn zero_linear_model_is_uniform() {
        let m = Classifier::zeros(cfg(Architecture::Linear, 3, 4, 0)).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, -5.0, 3.0, 100.0, 0.0, 2.0]);
        let p = m.predict_proba(&x).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn duplicated_rows_give_identical_outputs() {
        let m = Classifier::init(cfg(Architecture::Mlp { hidden_units: 3 }, 2, 3, 9)).unwrap();
        let x = Matrix::from_vec(2, 2, vec![0.3, -1.2, 0.3, -1.2]);
        let p = m.predict_proba(&x).unwrap();
        assert_eq!(p.row(0), p.row(1));
    }

    #[test]
    fn shape_mismatch_on_predict() {
        let m = Classifier::init(cfg(Architecture::Linear, 3, 2, 0)).unwrap();
        let err = m.predict_proba(&Matrix::zeros(1, 2)).unwrap_err();
        assert_eq!(err.code(), "SHAPE_MISMATCH");
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let mut z = vec![1000.0, 999.0, -1000.0];
        softmax_in_place(&mut z);
        assert!(z.iter().all(|v| v.is_finite()));
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn rows_are_distributions(
            seed in any::<u64>(),
            xs in prop::collection::vec(-50.0f64..50.0, 12),
            hidden in prop::option::of(1usize..6),
        ) {
            let arch = hidden.map_or(Architecture::Linear, |h| Architecture::Mlp { hidden_units: h });
            let m = Classifier::init(cfg(arch, 4, 3, seed)).unwrap();
            let p = m.predict_proba(&Matrix::from_vec(3, 4, xs)).unwrap();
            for row in p.iter_rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
