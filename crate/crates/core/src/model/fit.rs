//! Mini-batch training loops shared by pre-training and head fine-tuning.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    rmse_loss, AdamWConfig, AdamWState, DenseMatrix, MlpTrunk, Mode, PlateauConfig,
    PlateauScheduler, RegressionHead, TrunkInput,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub plateau: PlateauConfig,
}

/// Runs `schedule.epochs` passes over `n` samples in seeded random order and
/// returns the mean batch loss of each epoch. `step` trains on one batch of
/// sample indices at the given learning rate and returns its loss.
fn run_epochs<F>(n: usize, schedule: &Schedule, rng: &mut ChaCha8Rng, stage: &str, mut step: F) -> Result<Vec<f64>>
where
    F: FnMut(&[usize], f64) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::Data(format!("{stage}: no training windows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut scheduler = PlateauScheduler::new(schedule.plateau);
    let mut lr = schedule.optimizer.lr;
    let mut curve = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            total += step(chunk, lr)?;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric(format!("{stage} loss at epoch {}", epoch + 1)));
        }
        curve.push(mean);
        lr = scheduler.step(mean, lr);
    }
    Ok(curve)
}

/// Trains `trunk` and `head` jointly in train mode. The trunk is left in eval
/// mode afterwards.
pub fn fit_network<W: TrunkInput>(
    trunk: &mut MlpTrunk,
    head: &mut RegressionHead,
    windows: &[&W],
    targets: &[f64],
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    stage: &str,
) -> Result<Vec<f64>> {
    let mut opt = AdamWState::new(schedule.optimizer);
    trunk.set_mode(Mode::Train);
    let mut batch: Vec<&W> = Vec::with_capacity(schedule.batch_size);
    let mut y = Vec::with_capacity(schedule.batch_size);
    let curve = run_epochs(windows.len(), schedule, rng, stage, |idx, lr| {
        batch.clear();
        y.clear();
        for &i in idx {
            batch.push(windows[i]);
            y.push(targets[i]);
        }
        trunk.zero_grad();
        head.zero_grad();
        let features = trunk.forward(&batch).map_err(|e| e.in_stage(stage))?;
        let pred = head.forward(&features)?;
        let (loss, grad) = rmse_loss(&pred, &y)?;
        let g = head.backward(&grad)?;
        trunk.backward(&g)?;
        opt.set_lr(lr);
        let mut slots = trunk.params();
        slots.extend(head.params());
        opt.step(&mut slots)?;
        Ok(loss)
    });
    trunk.set_mode(Mode::Eval);
    trunk.clear_cache();
    head.clear_cache();
    curve
}

/// Trains only `head` on fixed trunk features.
pub fn fit_head(
    head: &mut RegressionHead,
    features: &DenseMatrix,
    targets: &[f64],
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    stage: &str,
) -> Result<Vec<f64>> {
    let mut opt = AdamWState::new(schedule.optimizer);
    let mut y = Vec::with_capacity(schedule.batch_size);
    let curve = run_epochs(features.rows(), schedule, rng, stage, |idx, lr| {
        y.clear();
        y.extend(idx.iter().map(|&i| targets[i]));
        head.zero_grad();
        let pred = head.forward(&features.select_rows(idx))?;
        let (loss, grad) = rmse_loss(&pred, &y)?;
        head.backward(&grad)?;
        opt.set_lr(lr);
        opt.step(&mut head.params())?;
        Ok(loss)
    });
    head.clear_cache();
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn schedule(epochs: usize) -> Schedule {
        Schedule {
            epochs,
            batch_size: 5,
            optimizer: AdamWConfig {
                lr: 0.05,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            plateau: PlateauConfig {
                factor: 0.6,
                patience: 10,
                min_lr: 1e-6,
            },
        }
    }

    #[test]
    fn head_learns_a_linear_map() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0, 1.0 - i as f64 / 40.0]).collect();
        let targets: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - r[1] + 0.5).collect();
        let features = DenseMatrix::from_rows(&rows).unwrap();
        let mut head = RegressionHead::from_parts(vec![0.0, 0.0], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let curve = fit_head(&mut head, &features, &targets, &schedule(300), &mut rng, "test").unwrap();
        assert_eq!(curve.len(), 300);
        assert!(curve[299] < 0.05 * curve[0], "{} -> {}", curve[0], curve[299]);
    }

    #[test]
    fn empty_training_set_is_data_error() {
        let mut head = RegressionHead::from_parts(vec![0.0], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = fit_head(&mut head, &DenseMatrix::zeros(0, 1), &[], &schedule(1), &mut rng, "t");
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn same_seed_same_result() {
        let features = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let run = || {
            let mut head = RegressionHead::from_parts(vec![0.1], 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            fit_head(&mut head, &features, &[1.0, 2.0, 2.5], &schedule(20), &mut rng, "t").unwrap();
            head
        };
        assert_eq!(run(), run());
    }
}
