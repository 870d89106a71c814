use serde::{Deserialize, Serialize};

use crate::nn::{AdamWConfig, PlateauConfig};
use crate::similarity::SimilarityOptions;
use crate::{Error, Result};

/// Every knob of a run. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    pub batch_size: usize,
    pub pretrain_plateau: PlateauConfig,
    pub finetune_plateau: PlateauConfig,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Tail fraction of a task's post-phase windows used to score candidates.
    pub selection_holdout_fraction: f64,
    /// Fine-tune trunk copies together with the candidate heads.
    pub train_trunk_in_finetune: bool,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub similarity: SimilarityOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 100,
            finetune_epochs: 50,
            lr_pretrain: 0.01,
            lr_finetune: 0.001,
            batch_size: 5,
            pretrain_plateau: PlateauConfig {
                factor: 0.8,
                patience: 20,
                min_lr: 1e-6,
            },
            finetune_plateau: PlateauConfig {
                factor: 0.6,
                patience: 10,
                min_lr: 1e-6,
            },
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            selection_holdout_fraction: 0.2,
            train_trunk_in_finetune: false,
            hidden: vec![128, 256, 64],
            dropout: 0.5,
            bn_momentum: 0.1,
            similarity: SimilarityOptions::default(),
            seed: 0,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a positive number, got {v}")))
    }
}

fn unit_open(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in (0, 1), got {v}")))
    }
}

fn plateau(field: &str, p: &PlateauConfig) -> Result<()> {
    unit_open(&format!("{field}.factor"), p.factor)?;
    if !(p.min_lr >= 0.0 && p.min_lr.is_finite()) {
        return Err(Error::config(format!("{field}.min_lr"), "must be finite and >= 0"));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pretrain_epochs == 0 {
            return Err(Error::config("pretrain_epochs", "must be at least 1"));
        }
        if self.finetune_epochs == 0 {
            return Err(Error::config("finetune_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        positive("lr_pretrain", self.lr_pretrain)?;
        positive("lr_finetune", self.lr_finetune)?;
        plateau("pretrain_plateau", &self.pretrain_plateau)?;
        plateau("finetune_plateau", &self.finetune_plateau)?;
        unit_open("beta1", self.beta1)?;
        unit_open("beta2", self.beta2)?;
        positive("adam_eps", self.adam_eps)?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be finite and >= 0"));
        }
        unit_open("selection_holdout_fraction", self.selection_holdout_fraction)?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden", "needs at least one non-zero width"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        unit_open("bn_momentum", self.bn_momentum)?;
        Ok(())
    }

    pub fn adamw(&self, lr: f64) -> AdamWConfig {
        AdamWConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_pretrain_epochs_is_config_error() {
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "pretrain_epochs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn holdout_fraction_must_be_open_unit() {
        for f in [0.0, 1.0, -0.1] {
            let cfg = TrainConfig {
                selection_holdout_fraction: f,
                ..Default::default()
            };
            assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        }
    }
}
