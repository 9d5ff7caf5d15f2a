use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Padded outfits: `features` is `[batch_size, max_len, input_dim]` and
/// `mask[b * max_len + i]` is true for real items. Padding is zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub features: Vec<T>,
    pub mask: Vec<bool>,
    pub batch_size: usize,
    pub max_len: usize,
    pub input_dim: usize,
}

impl<T: Scalar> Batch<T> {
    /// Packs rows of item features, padding every row to the longest one.
    pub fn from_rows<R: AsRef<[T]>>(input_dim: usize, rows: &[Vec<R>]) -> Result<Self> {
        let max_len = rows.iter().map(Vec::len).max().unwrap_or(0);
        Self::with_max_len(input_dim, rows, max_len)
    }

    pub fn with_max_len<R: AsRef<[T]>>(
        input_dim: usize,
        rows: &[Vec<R>],
        max_len: usize,
    ) -> Result<Self> {
        let batch_size = rows.len();
        let mut features = vec![T::zero(); batch_size * max_len * input_dim];
        let mut mask = vec![false; batch_size * max_len];
        for (b, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Validation(format!("batch row {b} has no items")));
            }
            if row.len() > max_len {
                return Err(Error::Validation(format!(
                    "batch row {b} has {} items, max_len is {max_len}",
                    row.len()
                )));
            }
            for (i, item) in row.iter().enumerate() {
                let item = item.as_ref();
                if item.len() != input_dim {
                    return Err(Error::Shape(format!(
                        "batch row {b} item {i}: feature length {} != input_dim {input_dim}",
                        item.len()
                    )));
                }
                let off = (b * max_len + i) * input_dim;
                features[off..off + input_dim].copy_from_slice(item);
                mask[b * max_len + i] = true;
            }
        }
        Ok(Batch {
            features,
            mask,
            batch_size,
            max_len,
            input_dim,
        })
    }

    /// Real (unmasked) item features of row `b`, in position order.
    pub fn row_items(&self, b: usize) -> Vec<&[T]> {
        (0..self.max_len)
            .filter(|&i| self.mask[b * self.max_len + i])
            .map(|i| {
                let off = (b * self.max_len + i) * self.input_dim;
                &self.features[off..off + self.input_dim]
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.batch_size * self.max_len * self.input_dim
            || self.mask.len() != self.batch_size * self.max_len
        {
            return Err(Error::Shape(
                "batch buffers do not match declared shape".into(),
            ));
        }
        for b in 0..self.batch_size {
            if !self.mask[b * self.max_len..(b + 1) * self.max_len]
                .iter()
                .any(|&m| m)
            {
                return Err(Error::Validation(format!("batch row {b} is fully masked")));
            }
        }
        Ok(())
    }
}
