use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::{Mode, ParamSlot};
use crate::{Error, Result};

/// Per-feature batch normalisation.
///
/// Train mode normalises with the batch mean and biased batch variance and
/// folds the unbiased variance into the running estimate. A single-row batch
/// has no variance, so it is normalised with the running statistics and leaves
/// them untouched. Eval mode always uses the running statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "BatchNormParams", into = "BatchNormParams")]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub mode: Mode,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug, PartialEq)]
struct BnCache {
    normalized: DenseMatrix,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

#[derive(Clone, Serialize, Deserialize)]
struct BatchNormParams {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    momentum: f64,
    eps: f64,
    mode: Mode,
}

impl From<BatchNormParams> for BatchNormState {
    fn from(p: BatchNormParams) -> Self {
        let n = p.gamma.len();
        BatchNormState {
            gamma: p.gamma,
            beta: p.beta,
            running_mean: p.running_mean,
            running_var: p.running_var,
            momentum: p.momentum,
            eps: p.eps,
            mode: p.mode,
            grad_gamma: vec![0.0; n],
            grad_beta: vec![0.0; n],
            cache: None,
        }
    }
}

impl From<BatchNormState> for BatchNormParams {
    fn from(s: BatchNormState) -> Self {
        BatchNormParams {
            gamma: s.gamma,
            beta: s.beta,
            running_mean: s.running_mean,
            running_var: s.running_var,
            momentum: s.momentum,
            eps: s.eps,
            mode: s.mode,
        }
    }
}

impl BatchNormState {
    pub fn new(features: usize, momentum: f64) -> Self {
        BatchNormParams {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum,
            eps: 1e-5,
            mode: Mode::Train,
        }
        .into()
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check_width(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.features() {
            return Err(Error::Shape(format!(
                "batch norm over {} features, got {}",
                self.features(),
                x.cols()
            )));
        }
        Ok(())
    }

    fn running_inv_std(&self) -> Vec<f64> {
        self.running_var
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect()
    }

    fn normalize_with(&self, x: &DenseMatrix, mean: &[f64], inv_std: &[f64]) -> DenseMatrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
        }
        out
    }

    fn affine(&self, normalized: &DenseMatrix) -> DenseMatrix {
        let mut y = normalized.clone();
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = self.gamma[j] * *v + self.beta[j];
            }
        }
        y
    }

    /// Eval-mode transform; never touches the running statistics.
    pub fn infer(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_width(x)?;
        let inv = self.running_inv_std();
        Ok(self.affine(&self.normalize_with(x, &self.running_mean, &inv)))
    }

    pub fn forward(&mut self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_width(x)?;
        let n = x.rows();
        let (normalized, inv_std, batch_stats) = if self.mode == Mode::Train && n >= 2 {
            let d = self.features();
            let mut mean = vec![0.0; d];
            for r in 0..n {
                for (m, v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; d];
            for r in 0..n {
                for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= n as f64);
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
            let unbias = n as f64 / (n as f64 - 1.0);
            for j in 0..d {
                self.running_mean[j] =
                    (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                self.running_var[j] =
                    (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbias;
            }
            (self.normalize_with(x, &mean, &inv), inv, true)
        } else {
            let inv = self.running_inv_std();
            (self.normalize_with(x, &self.running_mean, &inv), inv, false)
        };
        let y = self.affine(&normalized);
        self.cache = Some(BnCache {
            normalized,
            inv_std,
            batch_stats,
        });
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &DenseMatrix) -> Result<DenseMatrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batch norm backward called before forward".into()))?;
        let xh = &cache.normalized;
        if grad_out.rows() != xh.rows() || grad_out.cols() != xh.cols() {
            return Err(Error::Shape("batch norm backward: gradient shape".into()));
        }
        let (n, d) = (xh.rows(), xh.cols());
        for r in 0..n {
            for j in 0..d {
                let g = grad_out.get(r, j);
                self.grad_gamma[j] += g * xh.get(r, j);
                self.grad_beta[j] += g;
            }
        }
        let mut grad_in = DenseMatrix::zeros(n, d);
        if cache.batch_stats {
            let nf = n as f64;
            for j in 0..d {
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for r in 0..n {
                    let gx = grad_out.get(r, j) * self.gamma[j];
                    sum_g += gx;
                    sum_gx += gx * xh.get(r, j);
                }
                let k = cache.inv_std[j] / nf;
                for r in 0..n {
                    let gx = grad_out.get(r, j) * self.gamma[j];
                    grad_in.set(r, j, k * (nf * gx - sum_g - xh.get(r, j) * sum_gx));
                }
            }
        } else {
            for r in 0..n {
                for j in 0..d {
                    grad_in.set(r, j, grad_out.get(r, j) * self.gamma[j] * cache.inv_std[j]);
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.iter_mut().for_each(|g| *g = 0.0);
        self.grad_beta.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Normalised activations of the last forward pass, before gamma/beta.
    pub fn last_normalized(&self) -> Option<&DenseMatrix> {
        self.cache.as_ref().map(|c| &c.normalized)
    }

    pub fn params<'a>(&'a mut self, prefix: &str) -> Vec<ParamSlot<'a>> {
        vec![
            ParamSlot {
                name: format!("{prefix}.gamma"),
                value: &mut self.gamma,
                grad: &mut self.grad_gamma,
            },
            ParamSlot {
                name: format!("{prefix}.beta"),
                value: &mut self.beta,
                grad: &mut self.grad_beta,
            },
        ]
    }
}
