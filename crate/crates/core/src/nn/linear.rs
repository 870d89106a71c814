use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, DenseMatrix, View};
use super::ParamSlot;
use crate::{Error, Result};

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "LinearParams", into = "LinearParams")]
pub struct LinearLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub grad_weight: DenseMatrix,
    pub grad_bias: Vec<f64>,
    input: Option<DenseMatrix>,
}

#[derive(Clone, Serialize, Deserialize)]
struct LinearParams {
    weight: DenseMatrix,
    bias: Vec<f64>,
}

impl From<LinearParams> for LinearLayer {
    fn from(p: LinearParams) -> Self {
        LinearLayer::from_parts(p.weight, p.bias)
    }
}

impl From<LinearLayer> for LinearParams {
    fn from(l: LinearLayer) -> Self {
        LinearParams {
            weight: l.weight,
            bias: l.bias,
        }
    }
}

impl LinearLayer {
    /// Weights and biases uniform in `±1/sqrt(in_dim)`.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let weight = DenseMatrix::from_vec(
            out_dim,
            in_dim,
            (0..out_dim * in_dim).map(|_| dist.sample(rng)).collect(),
        )
        .expect("sized");
        let bias = (0..out_dim).map(|_| dist.sample(rng)).collect();
        LinearLayer::from_parts(weight, bias)
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearLayer::from_parts(DenseMatrix::zeros(out_dim, in_dim), vec![0.0; out_dim])
    }

    /// # Panics
    /// If `bias.len()` differs from the weight row count.
    pub fn from_parts(weight: DenseMatrix, bias: Vec<f64>) -> Self {
        assert_eq!(weight.rows(), bias.len(), "bias length must equal out_dim");
        let grad_weight = DenseMatrix::zeros(weight.rows(), weight.cols());
        let grad_bias = vec![0.0; bias.len()];
        LinearLayer {
            weight,
            bias,
            grad_weight,
            grad_bias,
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Forward pass without caching.
    pub fn infer(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        let mut y = DenseMatrix::zeros(x.rows(), self.out_dim());
        for r in 0..x.rows() {
            y.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(View::of(x), View::of(&self.weight).t(), 1.0, &mut y);
        Ok(y)
    }

    pub fn forward(&mut self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the
    /// cached input.
    pub fn backward(&mut self, grad_out: &DenseMatrix) -> Result<DenseMatrix> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("linear backward called before forward".into()))?;
        if grad_out.rows() != x.rows() || grad_out.cols() != self.out_dim() {
            return Err(Error::Shape(format!(
                "linear backward: grad {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                x.rows(),
                self.out_dim()
            )));
        }
        for r in 0..x.rows() {
            for (b, g) in self.grad_bias.iter_mut().zip(grad_out.row(r)) {
                *b += g;
            }
        }
        gemm(View::of(grad_out).t(), View::of(x), 1.0, &mut self.grad_weight);
        let mut grad_in = DenseMatrix::zeros(x.rows(), self.in_dim());
        gemm(View::of(grad_out), View::of(&self.weight), 0.0, &mut grad_in);
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }

    pub fn params<'a>(&'a mut self, prefix: &str) -> Vec<ParamSlot<'a>> {
        vec![
            ParamSlot {
                name: format!("{prefix}.weight"),
                value: self.weight.values_mut(),
                grad: self.grad_weight.values_mut(),
            },
            ParamSlot {
                name: format!("{prefix}.bias"),
                value: &mut self.bias,
                grad: &mut self.grad_bias,
            },
        ]
    }
}
