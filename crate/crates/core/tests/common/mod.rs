#![allow(dead_code)]

pub mod precise;

use nmt_core::data::{LagWindow, Window};
use nmt_core::nn::{AdamWConfig, AdamWState, MlpTrunk, Mode, Network, ParamSlot, RegressionHead, TrunkShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_windows(rng: &mut ChaCha8Rng, n: usize, lag: usize, nv: usize, np: usize) -> Vec<Window> {
    (0..n)
        .map(|_| {
            Window::new(
                rng.random_range(1..nv),
                rng.random_range(1..np),
                LagWindow {
                    lags: (0..lag).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    target: rng.random_range(-2.0..2.0),
                },
            )
        })
        .collect()
}

/// Network with perturbed batch-norm parameters so that no gradient is
/// trivially zero.
pub fn random_network(seed: u64, shape: TrunkShape) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trunk = MlpTrunk::new(shape, &mut rng, seed);
    for b in &mut trunk.blocks {
        for v in b.norm.gamma.iter_mut() {
            *v = rng.random_range(0.5..1.5);
        }
        for v in b.norm.beta.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        for v in b.norm.running_mean.iter_mut() {
            *v = rng.random_range(0.0..0.5);
        }
        for v in b.norm.running_var.iter_mut() {
            *v = rng.random_range(0.5..2.0);
        }
    }
    trunk.set_mode(Mode::Eval);
    let head = RegressionHead::new(trunk.output_width(), &mut rng);
    Network { trunk, head }
}

use nmt_core::data::{synth_bank, SynthBank, SynthConfig, TaskBank, TaskKey};
use nmt_core::model::TrainConfig;
use nmt_core::Exec;

/// Narrow network and short schedules for tests that exercise control flow.
pub fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 8,
        finetune_epochs: 8,
        hidden: vec![16, 16, 8],
        seed,
        ..TrainConfig::default()
    }
}

pub fn small_synth(clusters: usize, per_cluster: usize, seed: u64) -> SynthBank {
    synth_bank(&SynthConfig {
        n_clusters: clusters,
        tasks_per_cluster: per_cluster,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn bank_of(series: Vec<(TaskKey, Vec<f64>)>) -> TaskBank {
    TaskBank::from_series(series, 15, Exec::Sequential).unwrap()
}

/// Textbook AdamW on scalars, written independently of the library.
pub fn reference_adamw(theta: &mut [f64], grads: &[Vec<f64>], lr: f64, wd: f64) {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    for (t, g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            theta[i] -= lr * (mh / (vh.sqrt() + eps) + wd * theta[i]);
        }
    }
}

pub fn library_adamw(theta: &mut [f64], grads: &[Vec<f64>], lr: f64, wd: f64) {
    let mut opt = AdamWState::new(AdamWConfig {
        lr,
        weight_decay: wd,
        ..AdamWConfig::default()
    });
    for g in grads {
        let mut gv = g.clone();
        let mut slots = [ParamSlot {
            name: "theta".into(),
            value: theta,
            grad: &mut gv,
        }];
        opt.step(&mut slots).unwrap();
    }
    assert_eq!(opt.step, grads.len() as u64);
}
