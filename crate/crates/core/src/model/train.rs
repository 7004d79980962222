use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, softmax_in_place, Classifier, Layer, ModelError, Result};
use crate::data::{Dataset, SampleId};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainMode {
    /// Every layer is updated.
    #[default]
    FineTune,
    /// Only the output layer is updated; earlier layers act as a fixed feature extractor.
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: TrainMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 4,
            mode: TrainMode::FineTune,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Features and labels of `ids` (sorted ascending so training is independent of id order).
pub fn gather_labeled(dataset: &Dataset, ids: &[SampleId]) -> Result<(Matrix, Vec<usize>)> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    let mut labels = Vec::with_capacity(ids.len());
    for &id in &ids {
        labels.push(
            dataset
                .label_of(id)
                .ok_or(ModelError::UnlabeledSample(id))?,
        );
    }
    Ok((dataset.gather(&ids), labels))
}

impl Classifier {
    /// Mean cross-entropy over the rows and its gradient, laid out like the model's layers.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[usize]) -> Result<(f64, Vec<Layer>)> {
        self.check_batch(x, y)?;
        let rows: Vec<usize> = (0..x.rows()).collect();
        Ok(self.batch_gradient(x, y, &rows))
    }

    /// Mean cross-entropy over the rows.
    pub fn loss(&self, x: &Matrix, y: &[usize]) -> Result<f64> {
        self.check_batch(x, y)?;
        let (mut scratch, mut z) = (Vec::new(), Vec::new());
        let total: f64 = (0..x.rows())
            .map(|i| {
                self.logits(x.row(i), &mut scratch, &mut z);
                log_sum_exp(&z) - z[y[i]]
            })
            .sum();
        Ok(total / x.rows().max(1) as f64)
    }

    fn check_batch(&self, x: &Matrix, y: &[usize]) -> Result<()> {
        self.check_features(x)?;
        if x.rows() != y.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        let c = self.config.class_count;
        if let Some((row, &label)) = y.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(ModelError::InvalidLabel {
                row,
                label,
                class_count: c,
            });
        }
        Ok(())
    }

    fn batch_gradient(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> (f64, Vec<Layer>) {
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.inputs(), l.outputs()))
            .collect();
        let scale = 1.0 / rows.len().max(1) as f64;
        let mut loss = 0.0;
        let mut hidden = Vec::new();
        let mut z = Vec::new();
        let mut delta_hidden = Vec::new();
        for &r in rows {
            let input = x.row(r);
            self.logits(input, &mut hidden, &mut z);
            let target = y[r];
            loss += log_sum_exp(&z) - z[target];
            softmax_in_place(&mut z);
            z[target] -= 1.0;
            // z now holds dL/dlogits for this sample.
            let last = grads.len() - 1;
            let prev = if last == 0 { input } else { hidden.as_slice() };
            accumulate(&mut grads[last], &z, prev, scale);
            if last == 1 {
                let out = &self.layers[1];
                delta_hidden.clear();
                delta_hidden.extend((0..out.inputs()).map(|j| {
                    let back: f64 = (0..out.outputs())
                        .map(|o| out.weights.get(o, j) * z[o])
                        .sum();
                    back * (1.0 - hidden[j] * hidden[j])
                }));
                accumulate(&mut grads[0], &delta_hidden, input, scale);
            }
        }
        (loss * scale, grads)
    }
}

fn accumulate(grad: &mut Layer, delta: &[f64], input: &[f64], scale: f64) {
    for (o, &d) in delta.iter().enumerate() {
        let d = d * scale;
        grad.bias[o] += d;
        for (g, &v) in grad.weights.row_mut(o).iter_mut().zip(input) {
            *g += d * v;
        }
    }
}

/// Mini-batch SGD on cross-entropy starting from `model`'s weights; `model` itself is untouched.
///
/// Each epoch visits the rows in a fresh seeded permutation. With `epochs == 0` the
/// returned model equals the input.
pub fn train(model: &Classifier, x: &Matrix, y: &[usize], cfg: &TrainConfig) -> Result<Classifier> {
    cfg.validate()?;
    model.check_batch(x, y)?;
    let mut out = model.clone();
    if cfg.epochs == 0 || x.rows() == 0 {
        return Ok(out);
    }
    let trainable_from = match cfg.mode {
        TrainMode::FineTune => 0,
        TrainMode::Freeze => out.layers.len() - 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = out.batch_gradient(x, y, batch);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            for (layer, grad) in out.layers_mut().iter_mut().zip(&grads).skip(trainable_from) {
                for (w, g) in layer
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .zip(grad.weights.as_slice())
                {
                    *w -= cfg.learning_rate * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
                    *b -= cfg.learning_rate * g;
                }
            }
        }
        if out.params().iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
    }
    Ok(out)
}

/// Warm-start training from a previously trained (or pretrained) `base`.
pub fn fine_tune(
    base: &Classifier,
    x: &Matrix,
    y: &[usize],
    cfg: &TrainConfig,
) -> Result<Classifier> {
    train(base, x, y, cfg)
}
