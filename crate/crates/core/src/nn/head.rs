use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::LinearLayer;
use super::matrix::DenseMatrix;
use super::ParamSlot;
use crate::{Error, Result};

/// Single-output linear regression layer on top of the trunk features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionHead {
    pub layer: LinearLayer,
}

impl RegressionHead {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, rng: &mut R) -> Self {
        RegressionHead {
            layer: LinearLayer::new(in_dim, 1, rng),
        }
    }

    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Self {
        let n = weights.len();
        RegressionHead {
            layer: LinearLayer::from_parts(
                DenseMatrix::from_vec(1, n, weights).expect("sized"),
                vec![bias],
            ),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layer.in_dim()
    }

    fn check(&self, features: &DenseMatrix) -> Result<()> {
        if features.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "head expects {} features, got {}",
                self.in_dim(),
                features.cols()
            )));
        }
        Ok(())
    }

    pub fn infer(&self, features: &DenseMatrix) -> Result<Vec<f64>> {
        self.check(features)?;
        Ok(self.layer.infer(features)?.values().to_vec())
    }

    pub fn forward(&mut self, features: &DenseMatrix) -> Result<Vec<f64>> {
        self.check(features)?;
        Ok(self.layer.forward(features)?.values().to_vec())
    }

    /// Returns the gradient w.r.t. the features.
    pub fn backward(&mut self, grad_pred: &[f64]) -> Result<DenseMatrix> {
        let g = DenseMatrix::from_vec(grad_pred.len(), 1, grad_pred.to_vec())?;
        self.layer.backward(&g)
    }

    pub fn zero_grad(&mut self) {
        self.layer.zero_grad();
    }

    pub fn clear_cache(&mut self) {
        self.layer.clear_cache();
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_>> {
        self.layer.params("head")
    }

    /// Flat copy of all parameters (weights then bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.layer.weight.values().to_vec();
        v.extend_from_slice(&self.layer.bias);
        v
    }
}
