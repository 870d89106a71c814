//! Synthetic task banks with known cluster structure.
//!
//! Every cluster owns a seasonal pattern `level + amplitude * sin(2πt/period + phase)`.
//! Cluster levels are spaced [`CLUSTER_SEPARATION`] apart; tasks are their
//! cluster's pattern plus i.i.d. Gaussian noise.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::window::{TaskBank, TaskKey};
use super::DEFAULT_LAG;
use crate::exec::Exec;
use crate::seed::{stream_rng, Stream};
use crate::{Error, Result};

/// Distance between adjacent cluster levels, in demand units.
pub const CLUSTER_SEPARATION: f64 = 40.0;
const BASE_LEVEL: f64 = 60.0;
const VENDORS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub tasks_per_cluster: usize,
    pub series_len: usize,
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default = "default_lag")]
    pub lag: usize,
}

fn default_lag() -> usize {
    DEFAULT_LAG
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clusters: 3,
            tasks_per_cluster: 20,
            series_len: 60,
            noise_sd: 0.05 * CLUSTER_SEPARATION,
            seed: 0,
            lag: DEFAULT_LAG,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPattern {
    pub level: f64,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl ClusterPattern {
    pub fn value(&self, t: usize) -> f64 {
        self.level + self.amplitude * (TAU * t as f64 / self.period + self.phase).sin()
    }

    pub fn series<R: Rng + ?Sized>(&self, len: usize, noise_sd: f64, rng: &mut R) -> Vec<f64> {
        let noise = Normal::new(0.0, noise_sd.max(0.0)).expect("finite sd");
        (0..len)
            .map(|t| {
                let eps = if noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
                self.value(t) + eps
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthBank {
    pub bank: TaskBank,
    /// Ground-truth cluster of `bank.tasks[i]`.
    pub labels: Vec<usize>,
    pub patterns: Vec<ClusterPattern>,
}

impl SynthBank {
    pub fn label_of(&self, key: &TaskKey) -> Option<usize> {
        self.bank
            .tasks
            .iter()
            .position(|t| &t.key == key)
            .map(|i| self.labels[i])
    }
}

/// Generates `n_clusters * tasks_per_cluster` tasks. Task `t` belongs to
/// cluster `t % n_clusters`; vendor tokens are assigned at random so that the
/// categorical indices carry no cluster information.
pub fn synth_bank(cfg: &SynthConfig) -> Result<SynthBank> {
    if cfg.n_clusters == 0 || cfg.tasks_per_cluster == 0 || cfg.series_len == 0 {
        return Err(Error::config("synth", "cluster, task and length counts must be >= 1"));
    }
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(Error::config("synth.noise_sd", "must be a finite non-negative number"));
    }
    let mut rng: ChaCha8Rng = stream_rng(cfg.seed, Stream::Init);
    let patterns: Vec<ClusterPattern> = (0..cfg.n_clusters)
        .map(|c| ClusterPattern {
            level: BASE_LEVEL + c as f64 * CLUSTER_SEPARATION,
            amplitude: rng.random_range(0.15..0.35) * CLUSTER_SEPARATION,
            period: rng.random_range(5.0..25.0),
            phase: rng.random_range(0.0..TAU),
        })
        .collect();
    let n = cfg.n_clusters * cfg.tasks_per_cluster;
    let width = n.to_string().len().max(3);
    let mut series = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for t in 0..n {
        let c = t % cfg.n_clusters;
        let vendor = rng.random_range(0..VENDORS);
        let key = TaskKey::new(format!("v{vendor}"), format!("p{t:0width$}"));
        series.push((key, patterns[c].series(cfg.series_len, cfg.noise_sd, &mut rng)));
        labels.push(c);
    }
    let bank = TaskBank::from_series(series, cfg.lag, Exec::Sequential)?;
    Ok(SynthBank {
        bank,
        labels,
        patterns,
    })
}
