use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::Mode;
use crate::{Error, Result};

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` in train mode,
/// eval mode is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutState {
    pub rate: f64,
    pub mode: Mode,
    rng: ChaCha8Rng,
    #[serde(skip)]
    mask: Option<DenseMatrix>,
}

impl DropoutState {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        DropoutState {
            rate,
            mode: Mode::Train,
            rng,
            mask: None,
        }
    }

    /// True when forward passes consume randomness.
    pub fn is_stochastic(&self) -> bool {
        self.mode == Mode::Train && self.rate > 0.0
    }

    pub fn forward(&mut self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if !self.is_stochastic() {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mut mask = DenseMatrix::zeros(x.rows(), x.cols());
        for m in mask.values_mut() {
            if self.rng.random::<f64>() < keep {
                *m = scale;
            }
        }
        let mut y = x.clone();
        for (v, m) in y.values_mut().iter_mut().zip(mask.values()) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&self, grad_out: &DenseMatrix) -> Result<DenseMatrix> {
        let Some(mask) = &self.mask else {
            return Ok(grad_out.clone());
        };
        if mask.rows() != grad_out.rows() || mask.cols() != grad_out.cols() {
            return Err(Error::Shape("dropout backward: gradient shape".into()));
        }
        let mut g = grad_out.clone();
        for (v, m) in g.values_mut().iter_mut().zip(mask.values()) {
            *v *= m;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
