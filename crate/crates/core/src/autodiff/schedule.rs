use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A run of `epochs` epochs at a fixed learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrPhase {
    pub epochs: usize,
    pub lr: f64,
}

/// Optimization hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_schedule: Vec<LrPhase>,
    pub l2_coeff: f64,
    pub dropout_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_schedule: vec![LrPhase { epochs: 100, lr: 0.002 }, LrPhase { epochs: 200, lr: 0.0002 }],
            l2_coeff: 1e-6,
            dropout_rate: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_schedule.is_empty() {
            return Err(Error::Config("learning-rate schedule is empty".into()));
        }
        for phase in &self.lr_schedule {
            if !(phase.lr > 0.0) || !phase.lr.is_finite() {
                return Err(Error::Config(format!("learning rate {} must be positive", phase.lr)));
            }
            if phase.epochs == 0 {
                return Err(Error::Config("schedule phase with zero epochs".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.l2_coeff >= 0.0) {
            return Err(Error::Config(format!("l2 coefficient {} is negative", self.l2_coeff)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("optimizer constants out of range".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.lr_schedule.iter().map(|p| p.epochs).sum()
    }

    /// Learning rate for a zero-based epoch, `None` past the end of the
    /// schedule.
    pub fn lr_at_epoch(&self, epoch: usize) -> Option<f64> {
        let mut end = 0;
        for phase in &self.lr_schedule {
            end += phase.epochs;
            if epoch < end {
                return Some(phase.lr);
            }
        }
        None
    }

    /// Epoch indices at which a schedule phase ends (exclusive bounds).
    pub fn phase_boundaries(&self) -> Vec<usize> {
        self.lr_schedule
            .iter()
            .scan(0, |acc, p| {
                *acc += p.epochs;
                Some(*acc)
            })
            .collect()
    }
}
