use crate::error::{shape_err, Result, SllError};

/// Sparse feature vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Validates ordering, bounds and finiteness. Explicit zeros are dropped.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(shape_err(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SllError::NonFinite("sparse vector"));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(shape_err(format!(
                    "indices not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(shape_err(format!("index {} >= dimension {}", last, dim)));
            }
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Ok(SparseVector { indices, values })
    }

    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .unzip();
        Self::new(indices, values, dense.len())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Dot product against a dense vector; the caller guarantees bounds.
    #[inline]
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_order_and_bounds() {
        assert!(SparseVector::new(vec![1, 1], vec![1.0, 2.0], 3).is_err());
        assert!(SparseVector::new(vec![2, 1], vec![1.0, 2.0], 3).is_err());
        assert!(SparseVector::new(vec![0, 3], vec![1.0, 2.0], 3).is_err());
        assert!(SparseVector::new(vec![0], vec![f64::INFINITY], 3).is_err());
    }

    #[test]
    fn drops_explicit_zeros() {
        let v = SparseVector::new(vec![0, 1, 2], vec![1.0, 0.0, -2.0], 3).unwrap();
        assert_eq!(v.indices(), &[0, 2]);
        assert_eq!(v.dot_dense(&[1.0, 5.0, 1.0]), -1.0);
    }
}
