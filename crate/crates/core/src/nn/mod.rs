//! Dense neural-network kernels: layers with hand-written backward passes,
//! RMSE loss, AdamW, reduce-on-plateau scheduling and gradient checking.

pub mod adamw;
pub mod batchnorm;
pub mod dropout;
pub mod embedding;
pub mod gradcheck;
pub mod head;
pub mod linear;
pub mod loss;
pub mod matrix;
pub mod plateau;
pub mod trunk;

use serde::{Deserialize, Serialize};

pub use adamw::{AdamWConfig, AdamWState};
pub use batchnorm::BatchNormState;
pub use dropout::DropoutState;
pub use embedding::{EmbeddingTable, EMBEDDING_DIM};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, NetworkObjective, Objective};
pub use head::RegressionHead;
pub use linear::LinearLayer;
pub use loss::{rmse, rmse_loss};
pub use matrix::DenseMatrix;
pub use plateau::{PlateauConfig, PlateauScheduler};
pub use trunk::{MlpTrunk, TrunkShape};

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A parameter tensor and its gradient, flattened.
pub struct ParamSlot<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// One row of trunk input: two categorical indices and the lag values.
pub trait TrunkInput {
    fn vendor_idx(&self) -> usize;
    fn product_idx(&self) -> usize;
    fn lags(&self) -> &[f64];
}

/// Propagates `grad_pred` through `head` and then `trunk`, accumulating into
/// their gradient buffers.
pub fn backward(trunk: &mut MlpTrunk, head: &mut RegressionHead, grad_pred: &[f64]) -> Result<()> {
    let g = head.backward(grad_pred)?;
    trunk.backward(&g)
}

/// Trunk plus a single head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub trunk: MlpTrunk,
    pub head: RegressionHead,
}

impl Network {
    pub fn forward<W: TrunkInput>(&mut self, batch: &[&W]) -> Result<Vec<f64>> {
        let f = self.trunk.forward(batch)?;
        self.head.forward(&f)
    }

    pub fn infer<W: TrunkInput>(&self, batch: &[&W]) -> Result<Vec<f64>> {
        let f = self.trunk.infer(batch)?;
        self.head.infer(&f)
    }

    pub fn backward(&mut self, grad_pred: &[f64]) -> Result<()> {
        backward(&mut self.trunk, &mut self.head, grad_pred)
    }

    pub fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.head.zero_grad();
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_>> {
        let mut p = self.trunk.params();
        p.extend(self.head.params());
        p
    }
}
