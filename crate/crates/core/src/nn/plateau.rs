use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

/// Minimum absolute decrease that counts as an improvement.
pub const IMPROVEMENT_THRESHOLD: f64 = 1e-8;

/// Reduce-on-plateau learning-rate schedule over a per-epoch metric.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub config: PlateauConfig,
    pub best: f64,
    pub epochs_since_improve: usize,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig) -> Self {
        PlateauScheduler {
            config,
            best: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }

    /// Feeds one epoch's metric and returns the learning rate for the next
    /// epoch. Once the metric fails to improve for more than `patience`
    /// consecutive epochs the rate is multiplied by `factor` (floored at
    /// `min_lr`) and the counter restarts.
    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        if metric < self.best - IMPROVEMENT_THRESHOLD {
            self.best = metric;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        if self.epochs_since_improve > self.config.patience {
            self.epochs_since_improve = 0;
            return (lr * self.config.factor).max(self.config.min_lr);
        }
        lr
    }
}
