//! Training hyperparameters, learning-rate schedule, Adam and early
//! stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;
use crate::topology::Param;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_final: f64,
    /// Last epoch at `lr0`; the rate then falls linearly to `lr_final` at
    /// `max_epochs`.
    pub decay_start_epoch: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a lower validation loss before stopping.
    pub patience: usize,
    pub crop_len: usize,
    pub seed: u64,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            lr_final: 1e-6,
            decay_start_epoch: 50,
            max_epochs: 500,
            batch_size: 128,
            patience: 100,
            crop_len: 128,
            seed: 0,
            dropout_rate: crate::topology::DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr0) {
            return bad(format!("need 0 < lr_final <= lr0, got {} and {}", self.lr_final, self.lr0));
        }
        if self.crop_len == 0 || self.crop_len > crate::dsp::N_FRAMES {
            return bad(format!("crop_len {} outside 1..={}", self.crop_len, crate::dsp::N_FRAMES));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("max_epochs, batch_size and patience must be positive".into());
        }
        if self.decay_start_epoch >= self.max_epochs {
            return bad(format!(
                "decay_start_epoch {} must precede max_epochs {}",
                self.decay_start_epoch, self.max_epochs
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr(&self, epoch: usize) -> Result<f64> {
        if epoch < 1 || epoch > self.max_epochs {
            return Err(Error::Contract(format!("epoch {epoch} outside 1..={}", self.max_epochs)));
        }
        if epoch <= self.decay_start_epoch {
            return Ok(self.lr0);
        }
        if epoch == self.max_epochs {
            return Ok(self.lr_final);
        }
        let frac = (epoch - self.decay_start_epoch) as f64 / (self.max_epochs - self.decay_start_epoch) as f64;
        Ok(self.lr0 + frac * (self.lr_final - self.lr0))
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam with bias correction; moments are kept in `f64`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adam {
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` belongs to `params[i]`; a non-finite
    /// gradient aborts before anything is modified.
    pub fn step<T: Scalar>(&mut self, params: &mut [Param<T>], grads: &[&[T]], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Contract(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if g.len() != p.value.numel() {
                return Err(Error::Dimension(format!("gradient for {} has {} entries", p.name, g.len())));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {} at index {i}", p.name)));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((x, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                let gi = gi.as_f64();
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
                let step = lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPSILON);
                *x = T::from_f64(x.as_f64() - step);
            }
        }
        Ok(())
    }
}

/// Stops once the validation loss has not improved for `patience` epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision { improved, stop: self.stale >= self.patience }
    }
}
