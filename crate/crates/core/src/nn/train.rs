//! Mini-batch Adam with plateau learning-rate decay, early stopping and
//! best-epoch restoration.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::data::{Window, WindowedDataset};
use crate::error::{Error, Result};
use crate::seed;

/// A validation loss counts as an improvement only when it beats the best so
/// far by at least this much.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// The learning rate is divided by this on a plateau.
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-4,
            plateau_factor: 10.0,
            plateau_patience: 5,
            max_epochs: 50,
            early_stop_patience: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!("initial_lr must be positive, got {}", self.initial_lr)));
        }
        if self.plateau_factor.is_nan() || self.plateau_factor <= 1.0 {
            return Err(Error::Config(format!("plateau_factor must exceed 1, got {}", self.plateau_factor)));
        }
        if self.plateau_patience == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "plateau_patience, max_epochs, early_stop_patience and batch_size must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

fn check_shapes(model: &Classifier, wd: &WindowedDataset, what: &str) -> Result<()> {
    if wd.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    let expected = model.input_shape();
    if (wd.num_channels(), wd.width()) != expected {
        return Err(Error::Shape {
            expected: format!("{}x{} {what} windows", expected.0, expected.1),
            got: format!("{}x{}", wd.num_channels(), wd.width()),
        });
    }
    Ok(())
}

/// Trains `model` and returns it with the parameters of its best
/// validation-loss epoch and the per-epoch history.
pub fn train(mut model: Classifier, train: &WindowedDataset, val: &WindowedDataset, tc: &TrainConfig) -> Result<Classifier> {
    tc.validate()?;
    check_shapes(&model, train, "training")?;
    check_shapes(&model, val, "validation")?;

    let mut rng = seed::rng(tc.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut adam = Adam::new(model.num_parameters());
    let mut grad = vec![0.0; model.num_parameters()];
    let mut batch: Vec<&Window> = Vec::with_capacity(tc.batch_size);

    let mut lr = tc.initial_lr;
    let mut best_loss = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut since_plateau_reset = 0;
    let mut since_improvement = 0;
    model.history.clear();

    for epoch in 0..tc.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train.windows()[i]));
            let loss = model.accumulate(&batch, &mut grad)?;
            train_loss += loss * chunk.len() as f64;
            adam.step(&mut model.params, &grad, lr);
        }
        let val_loss = model.loss(val)?;
        model.history.push(EpochRecord {
            epoch,
            train_loss: train_loss / train.len() as f64,
            val_loss,
            lr,
        });

        if val_loss < best_loss - MIN_IMPROVEMENT {
            best_loss = val_loss;
            best_params.copy_from_slice(&model.params);
            since_plateau_reset = 0;
            since_improvement = 0;
        } else {
            since_plateau_reset += 1;
            since_improvement += 1;
            if since_improvement >= tc.early_stop_patience {
                break;
            }
            if since_plateau_reset >= tc.plateau_patience {
                lr /= tc.plateau_factor;
                since_plateau_reset = 0;
            }
        }
    }
    model.params = best_params;
    Ok(model)
}
