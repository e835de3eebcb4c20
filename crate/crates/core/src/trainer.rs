//! Fine-tuning loop and evaluation metrics.
//!
//! Adam with fixed hyperparameters, mean cross-entropy per batch, a seeded
//! shuffle every epoch, no scheduler, no early stopping. The reported
//! metrics are those of the final epoch. The last partial batch is kept.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedDataset, EncodedExample};
use crate::encoder::{cross_entropy, EncoderModel, ModelConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Seeds model initialization, subsampling and (unless overridden)
    /// the epoch shuffles.
    pub seed: u64,
    pub fraction: f64,
    /// Overrides the seed of the per-epoch shuffle only.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 32,
            max_epochs: 5,
            seed: 42,
            fraction: 1.0,
            shuffle_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be positive"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config("fraction", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, num_params: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let mut offset = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for (((w, &gi), mi), vi) in p.iter_mut().zip(g.data).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += p.len();
        }
        assert_eq!(offset, self.m.len(), "optimizer state does not match parameters");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub validation_accuracy: f64,
    pub training_accuracy: f64,
    /// `training_accuracy − validation_accuracy`
    pub gap: f64,
    /// `validation_accuracy / param_total`
    pub accuracy_per_param: f64,
    pub param_total: usize,
    /// Epoch 0 is the untrained model.
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_s: f64,
}

impl MetricsReport {
    pub fn from_final(validation_accuracy: f64, training_accuracy: f64, param_total: usize) -> Self {
        Self {
            validation_accuracy,
            training_accuracy,
            gap: training_accuracy - validation_accuracy,
            accuracy_per_param: validation_accuracy / param_total as f64,
            param_total,
            epochs: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "val_acc={:.4} train_acc={:.4} gap={:.4} acc_per_param={:.3e} params={}",
            self.validation_accuracy, self.training_accuracy, self.gap, self.accuracy_per_param, self.param_total
        )
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Arg-max class of every example.
pub fn predict(model: &EncoderModel, dataset: &EncodedDataset, exec: Exec) -> Result<Vec<usize>> {
    exec.map(&dataset.examples, |_, ex| {
        let logits = model.logits(&ex.ids, &ex.mask)?;
        Ok(argmax(logits.as_slice().expect("contiguous")))
    })
    .into_iter()
    .collect()
}

/// Fraction of examples whose arg-max logit is the label.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len() as f64
}

pub fn evaluate(model: &EncoderModel, dataset: &EncodedDataset) -> Result<f64> {
    evaluate_with(model, dataset, Exec::default())
}

pub fn evaluate_with(model: &EncoderModel, dataset: &EncodedDataset, exec: Exec) -> Result<f64> {
    Ok(accuracy(&predict(model, dataset, exec)?, &dataset.labels()))
}

/// Mean loss and accuracy in one pass.
fn loss_and_accuracy(model: &EncoderModel, dataset: &EncodedDataset, exec: Exec) -> Result<(f64, f64)> {
    let rows = exec.map(&dataset.examples, |_, ex| -> Result<(f64, bool)> {
        let logits = model.logits(&ex.ids, &ex.mask)?;
        let logits = logits.as_slice().expect("contiguous");
        Ok((cross_entropy(logits, ex.label), argmax(logits) == ex.label))
    });
    let (mut loss, mut correct) = (0.0, 0usize);
    for r in rows {
        let (l, ok) = r?;
        loss += l;
        correct += ok as usize;
    }
    let n = dataset.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &EncodedDataset,
    val_set: &EncodedDataset,
) -> Result<(EncoderModel, MetricsReport)> {
    train_with(model_config, train_config, train_set, val_set, Exec::default())
}

pub fn train_with(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &EncodedDataset,
    val_set: &EncodedDataset,
    exec: Exec,
) -> Result<(EncoderModel, MetricsReport)> {
    let started = Instant::now();
    model_config.validate(false)?;
    train_config.validate()?;
    for (name, set) in [("train", train_set), ("validation", val_set)] {
        if set.is_empty() {
            return Err(Error::config(name, "dataset is empty"));
        }
        if set.num_classes != model_config.num_classes {
            return Err(Error::config(
                "num_classes",
                format!("{name} set has {} classes, model {}", set.num_classes, model_config.num_classes),
            ));
        }
    }

    let train_set = if train_config.fraction < 1.0 {
        train_set.subsample(train_config.fraction, train_config.seed)?
    } else {
        train_set.clone()
    };
    let mut model = EncoderModel::from_seed(model_config.clone(), train_config.seed)?;
    let mut optimizer = Adam::new(train_config.learning_rate, model.param_count());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_config.shuffle_seed.unwrap_or(train_config.seed));
    let dropout_base = train_config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);

    let record = |model: &EncoderModel, epoch: usize| -> Result<EpochRecord> {
        let (train_loss, train_acc) = loss_and_accuracy(model, &train_set, exec)?;
        let (val_loss, val_acc) = loss_and_accuracy(model, val_set, exec)?;
        Ok(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        })
    };

    let mut epochs = vec![record(&model, 0)?];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;
    for epoch in 1..=train_config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(train_config.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train_set.examples[i]).collect();
            let dropout_seed = (model_config.dropout > 0.0).then(|| dropout_base.wrapping_add(step as u64));
            let (loss, grads) = model.loss_and_gradients(&batch, dropout_seed, exec)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            optimizer.step(&mut model, &grads);
            step += 1;
        }
        epochs.push(record(&model, epoch)?);
    }

    let last = epochs.last().expect("at least one epoch");
    let mut report = MetricsReport::from_final(last.val_acc, last.train_acc, model.param_count());
    report.epochs = epochs;
    report.wall_clock_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}
