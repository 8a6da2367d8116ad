//! Mini-batch SGD with per-sample gradients computed in parallel and summed
//! in a fixed order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::cross_entropy;
use super::model::{argmax, MobileMini, WeightInit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            weight_init: WeightInit::XavierUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning rate {} must be finite and ≥ 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        Ok(())
    }
}

/// One labeled input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best validation accuracy, or the last epoch without validation data.
    pub model: MobileMini,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Mean loss and accuracy over a labeled set.
pub fn evaluate_set(model: &MobileMini, data: &[Sample]) -> Result<(f64, f64)> {
    let rows: Vec<(f64, bool)> = data
        .par_iter()
        .map(|s| {
            let p = model.forward(&s.x)?;
            Ok((cross_entropy(&p, s.label)?, argmax(&p) == s.label))
        })
        .collect::<Result<_>>()?;
    let n = rows.len().max(1) as f64;
    Ok((
        rows.iter().map(|r| r.0).sum::<f64>() / n,
        rows.iter().filter(|r| r.1).count() as f64 / n,
    ))
}

/// Trains `model` in place of a copy and returns the best weights seen.
pub fn train(model: &MobileMini, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    for s in train.iter().chain(val) {
        if s.label >= model.arch.classes {
            return Err(Error::domain(format!(
                "label {} outside {} classes",
                s.label, model.arch.classes
            )));
        }
        if s.x.len() != model.arch.input_len {
            return Err(Error::shape(format!(
                "sample has {} features, model expects {}",
                s.x.len(),
                model.arch.input_len
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut current = model.clone();
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY, f64::INFINITY);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Vec<(f64, MobileMini)> = batch
                .par_iter()
                .map(|&k| {
                    let cache = current.forward_cached(&train[k].x)?;
                    let loss = cross_entropy(&cache.probs, train[k].label)?;
                    Ok((loss, current.backward(&cache, train[k].label)?))
                })
                .collect::<Result<_>>()
                .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
            let mut grad = current.zeros_like();
            for (loss, g) in &per_sample {
                loss_sum += loss;
                for (acc, t) in grad.params_mut().into_iter().zip(g.params()) {
                    acc.add_assign(t);
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (w, g) in current.params_mut().into_iter().zip(grad.params()) {
                for (a, b) in w.data.iter_mut().zip(&g.data) {
                    *a -= step * b;
                }
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !current.is_finite() {
            return Err(Error::Training(format!(
                "diverged at epoch {epoch}: mean loss {train_loss}, learning rate {}",
                cfg.learning_rate
            )));
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_set(&current, val)?;
            (Some(l), Some(a))
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        match (val_accuracy, val_loss) {
            (Some(a), Some(l)) => {
                if a > best.2 || (a == best.2 && l < best.3) {
                    best = (current.clone(), epoch, a, l);
                }
            }
            _ => best = (current.clone(), epoch, f64::NEG_INFINITY, f64::INFINITY),
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        history,
        best_epoch: best.1,
    })
}
