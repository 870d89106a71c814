use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batchnorm::BatchNormState;
use super::dropout::DropoutState;
use super::embedding::{EmbeddingTable, EMBEDDING_DIM};
use super::linear::LinearLayer;
use super::matrix::DenseMatrix;
use super::{Mode, ParamSlot, TrunkInput};
use crate::exec::Exec;
use crate::seed::{stream_rng, Stream};
use crate::{Error, Result};

/// Architecture of the shared feature extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkShape {
    pub vendor_vocab: usize,
    pub product_vocab: usize,
    pub lag: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub bn_momentum: f64,
}

impl TrunkShape {
    pub fn new(vendor_vocab: usize, product_vocab: usize, lag: usize) -> Self {
        TrunkShape {
            vendor_vocab,
            product_vocab,
            lag,
            hidden: vec![128, 256, 64],
            dropout: 0.5,
            bn_momentum: 0.1,
        }
    }

    pub fn input_width(&self) -> usize {
        2 * EMBEDDING_DIM + self.lag
    }

    pub fn output_width(&self) -> usize {
        *self.hidden.last().unwrap_or(&self.input_width())
    }
}

/// `Linear -> ReLU -> BatchNorm -> Dropout`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub linear: LinearLayer,
    pub norm: BatchNormState,
    pub dropout: DropoutState,
    #[serde(skip)]
    relu_mask: Option<Vec<bool>>,
}

/// Two categorical embeddings concatenated with the lag values, followed by a
/// stack of [`Block`]s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpTrunk {
    pub shape: TrunkShape,
    pub vendor: EmbeddingTable,
    pub product: EmbeddingTable,
    pub blocks: Vec<Block>,
}

impl MlpTrunk {
    /// Draws initial weights from `rng`; dropout streams are derived from
    /// `master_seed`.
    pub fn new<R: Rng + ?Sized>(shape: TrunkShape, rng: &mut R, master_seed: u64) -> Self {
        let vendor = EmbeddingTable::new("vendor", shape.vendor_vocab, rng);
        let product = EmbeddingTable::new("product", shape.product_vocab, rng);
        let mut blocks = Vec::with_capacity(shape.hidden.len());
        let mut width = shape.input_width();
        for (i, &h) in shape.hidden.iter().enumerate() {
            blocks.push(Block {
                linear: LinearLayer::new(width, h, rng),
                norm: BatchNormState::new(h, shape.bn_momentum),
                dropout: DropoutState::new(
                    shape.dropout,
                    stream_rng(master_seed, Stream::Dropout(i as u32)),
                ),
                relu_mask: None,
            });
            width = h;
        }
        MlpTrunk {
            shape,
            vendor,
            product,
            blocks,
        }
    }

    pub fn output_width(&self) -> usize {
        self.shape.output_width()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        for b in &mut self.blocks {
            b.norm.mode = mode;
            b.dropout.mode = mode;
        }
    }

    pub fn set_dropout_mode(&mut self, mode: Mode) {
        for b in &mut self.blocks {
            b.dropout.mode = mode;
        }
    }

    /// False when a forward pass would draw dropout masks.
    pub fn is_deterministic(&self) -> bool {
        self.blocks.iter().all(|b| !b.dropout.is_stochastic())
    }

    fn assemble<W: TrunkInput>(&self, batch: &[&W]) -> Result<DenseMatrix> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let width = self.shape.input_width();
        let mut x = DenseMatrix::zeros(batch.len(), width);
        for (r, w) in batch.iter().enumerate() {
            let lags = w.lags();
            if lags.len() != self.shape.lag {
                return Err(Error::Shape(format!(
                    "window has {} lags, trunk expects {}",
                    lags.len(),
                    self.shape.lag
                )));
            }
            let row = x.row_mut(r);
            row[..EMBEDDING_DIM].copy_from_slice(self.vendor.lookup(w.vendor_idx())?);
            row[EMBEDDING_DIM..2 * EMBEDDING_DIM]
                .copy_from_slice(self.product.lookup(w.product_idx())?);
            row[2 * EMBEDDING_DIM..].copy_from_slice(lags);
        }
        if !x.is_finite() {
            return Err(Error::Numeric("trunk input".into()));
        }
        Ok(x)
    }

    /// Eval-mode forward pass. Takes `&self`, caches nothing and ignores the
    /// mode flags, so it may be called concurrently on a shared trunk.
    pub fn infer<W: TrunkInput>(&self, batch: &[&W]) -> Result<DenseMatrix> {
        let mut h = self.assemble(batch)?;
        for (i, b) in self.blocks.iter().enumerate() {
            let mut z = b.linear.infer(&h)?;
            finite(&z, i, "linear")?;
            relu_in_place(&mut z);
            h = b.norm.infer(&z)?;
            finite(&h, i, "batch_norm")?;
        }
        Ok(h)
    }

    /// [`MlpTrunk::infer`] over an arbitrarily long batch, split into chunks
    /// that are processed according to `exec`.
    pub fn infer_many<W: TrunkInput + Sync>(&self, batch: &[&W], exec: Exec) -> Result<DenseMatrix> {
        const CHUNK: usize = 128;
        if batch.len() <= CHUNK {
            return self.infer(batch);
        }
        let chunks: Vec<&[&W]> = batch.chunks(CHUNK).collect();
        let parts = exec.try_map(&chunks, |c| self.infer(c))?;
        DenseMatrix::vstack(&parts)
    }

    /// Training forward pass honouring the current modes; caches everything
    /// [`MlpTrunk::backward`] needs.
    pub fn forward<W: TrunkInput>(&mut self, batch: &[&W]) -> Result<DenseMatrix> {
        let mut h = self.assemble(batch)?;
        self.vendor.remember(batch.iter().map(|w| w.vendor_idx()).collect());
        self.product.remember(batch.iter().map(|w| w.product_idx()).collect());
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let mut z = b.linear.forward(&h)?;
            finite(&z, i, "linear")?;
            b.relu_mask = Some(relu_in_place(&mut z));
            let n = b.norm.forward(&z)?;
            finite(&n, i, "batch_norm")?;
            h = b.dropout.forward(&n)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_features: &DenseMatrix) -> Result<()> {
        let mut g = grad_features.clone();
        for b in self.blocks.iter_mut().rev() {
            g = b.dropout.backward(&g)?;
            g = b.norm.backward(&g)?;
            let mask = b
                .relu_mask
                .as_ref()
                .ok_or_else(|| Error::State("trunk backward called before forward".into()))?;
            for (v, &on) in g.values_mut().iter_mut().zip(mask) {
                if !on {
                    *v = 0.0;
                }
            }
            g = b.linear.backward(&g)?;
        }
        let rows = g.rows();
        let mut gv = DenseMatrix::zeros(rows, EMBEDDING_DIM);
        let mut gp = DenseMatrix::zeros(rows, EMBEDDING_DIM);
        for r in 0..rows {
            let row = g.row(r);
            gv.row_mut(r).copy_from_slice(&row[..EMBEDDING_DIM]);
            gp.row_mut(r)
                .copy_from_slice(&row[EMBEDDING_DIM..2 * EMBEDDING_DIM]);
        }
        self.vendor.backward(&gv)?;
        self.product.backward(&gp)?;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.vendor.zero_grad();
        self.product.zero_grad();
        for b in &mut self.blocks {
            b.linear.zero_grad();
            b.norm.zero_grad();
        }
    }

    pub fn clear_cache(&mut self) {
        self.vendor.clear_cache();
        self.product.clear_cache();
        for b in &mut self.blocks {
            b.linear.clear_cache();
            b.norm.clear_cache();
            b.dropout.clear_cache();
            b.relu_mask = None;
        }
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_>> {
        let mut out = self.vendor.params("vendor_embedding");
        out.extend(self.product.params("product_embedding"));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(b.linear.params(&format!("block{i}.linear")));
            out.extend(b.norm.params(&format!("block{i}.batch_norm")));
        }
        out
    }
}

fn relu_in_place(z: &mut DenseMatrix) -> Vec<bool> {
    z.values_mut()
        .iter_mut()
        .map(|v| {
            if *v > 0.0 {
                true
            } else {
                *v = 0.0;
                false
            }
        })
        .collect()
}

fn finite(m: &DenseMatrix, block: usize, layer: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("block{block}.{layer}")))
    }
}
