use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, DenseMatrix};
use super::ParamSlot;
use crate::{Error, Result};

/// Width of every categorical embedding.
pub const EMBEDDING_DIM: usize = 5;

/// Lookup table mapping a categorical index to a learned 5-vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "EmbeddingParams", into = "EmbeddingParams")]
pub struct EmbeddingTable {
    #[serde(skip)]
    field: &'static str,
    pub table: DenseMatrix,
    pub grad: DenseMatrix,
    indices: Option<Vec<usize>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct EmbeddingParams {
    field: String,
    table: DenseMatrix,
}

impl From<EmbeddingParams> for EmbeddingTable {
    fn from(p: EmbeddingParams) -> Self {
        EmbeddingTable::from_table(field_name(&p.field), p.table)
    }
}

impl From<EmbeddingTable> for EmbeddingParams {
    fn from(e: EmbeddingTable) -> Self {
        EmbeddingParams {
            field: e.field.to_string(),
            table: e.table,
        }
    }
}

fn field_name(s: &str) -> &'static str {
    match s {
        "vendor" => "vendor",
        "product" => "product",
        _ => "categorical",
    }
}

impl EmbeddingTable {
    /// Entries drawn from N(0, 0.1).
    pub fn new<R: Rng + ?Sized>(field: &'static str, vocab_size: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid sd");
        let values = (0..vocab_size * EMBEDDING_DIM)
            .map(|_| normal.sample(rng))
            .collect();
        let table = DenseMatrix::from_vec(vocab_size, EMBEDDING_DIM, values).expect("sized");
        EmbeddingTable::from_table(field, table)
    }

    /// # Panics
    /// If the table is not `vocab × 5`.
    pub fn from_table(field: &'static str, table: DenseMatrix) -> Self {
        assert_eq!(table.cols(), EMBEDDING_DIM);
        let grad = DenseMatrix::zeros(table.rows(), EMBEDDING_DIM);
        EmbeddingTable {
            field,
            table,
            grad,
            indices: None,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn check(&self, index: usize) -> Result<()> {
        if index >= self.vocab_size() {
            return Err(Error::Vocabulary {
                field: self.field,
                index,
                size: self.vocab_size(),
            });
        }
        Ok(())
    }

    pub fn lookup(&self, index: usize) -> Result<&[f64]> {
        self.check(index)?;
        Ok(self.table.row(index))
    }

    pub fn remember(&mut self, indices: Vec<usize>) {
        self.indices = Some(indices);
    }

    /// Scatters `grad_out` (one row per remembered lookup) into the rows that
    /// were looked up; other rows are left untouched.
    pub fn backward(&mut self, grad_out: &DenseMatrix) -> Result<()> {
        let idx = self
            .indices
            .as_ref()
            .ok_or_else(|| Error::State("embedding backward called before forward".into()))?;
        if grad_out.rows() != idx.len() || grad_out.cols() != EMBEDDING_DIM {
            return Err(Error::Shape("embedding backward: gradient shape".into()));
        }
        for (r, &i) in idx.iter().enumerate() {
            axpy(1.0, grad_out.row(r), self.grad.row_mut(i));
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn clear_cache(&mut self) {
        self.indices = None;
    }

    pub fn params<'a>(&'a mut self, prefix: &str) -> Vec<ParamSlot<'a>> {
        vec![ParamSlot {
            name: format!("{prefix}.table"),
            value: self.table.values_mut(),
            grad: self.grad.values_mut(),
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn out_of_vocab_lookup_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = EmbeddingTable::new("vendor", 3, &mut rng);
        assert!(e.lookup(2).is_ok());
        assert!(matches!(
            e.lookup(3),
            Err(Error::Vocabulary { field: "vendor", index: 3, size: 3 })
        ));
    }

    #[test]
    fn gradient_only_touches_looked_up_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut e = EmbeddingTable::new("product", 4, &mut rng);
        e.remember(vec![1, 3, 1]);
        let g = DenseMatrix::from_vec(3, 5, vec![1.0; 15]).unwrap();
        e.backward(&g).unwrap();
        assert_eq!(e.grad.row(0), &[0.0; 5]);
        assert_eq!(e.grad.row(1), &[2.0; 5]);
        assert_eq!(e.grad.row(2), &[0.0; 5]);
        assert_eq!(e.grad.row(3), &[1.0; 5]);
    }
}
