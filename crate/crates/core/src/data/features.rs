use rayon::prelude::*;

use super::dense::DenseMatrix;
use super::sparse::SparseVector;
use crate::error::{shape_err, Result};

// Fixed so that chunked reductions give the same bits for any pool size.
const REDUCE_CHUNK: usize = 512;

/// The feature matrix as `n` sparse example rows of dimension `d`.
///
/// In matrix notation this is `X` (d x n, one column per example); all
/// products below are written in that convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    rows: Vec<SparseVector>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        if dim == 0 {
            return Err(shape_err("feature dimension must be at least 1"));
        }
        if let Some(bad) = rows
            .iter()
            .flat_map(|r| r.indices().last())
            .find(|&&i| i >= dim)
        {
            return Err(shape_err(format!("feature id {} >= dimension {}", bad, dim)));
        }
        Ok(FeatureMatrix { dim, rows })
    }

    /// Builds from dense example rows (`n x d`), mostly for tests.
    pub fn from_dense_rows(rows: &DenseMatrix) -> Result<Self> {
        let sparse = (0..rows.rows())
            .map(|i| SparseVector::from_dense(rows.row(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows.cols(), sparse)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_examples(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn subset(&self, examples: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dim: self.dim,
            rows: examples.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Largest squared example norm.
    pub fn max_squared_norm(&self) -> f64 {
        self.rows.iter().map(SparseVector::squared_norm).fold(0.0, f64::max)
    }

    /// `Xᵀ v`: one score per example.
    pub fn project_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(shape_err(format!("vector length {} != d {}", v.len(), self.dim)));
        }
        Ok(self.rows.par_iter().map(|r| r.dot_dense(v)).collect())
    }

    /// `X t`: weighted sum of examples.
    pub fn back_project_vec(&self, t: &[f64]) -> Result<Vec<f64>> {
        if t.len() != self.rows.len() {
            return Err(shape_err(format!(
                "vector length {} != n {}",
                t.len(),
                self.rows.len()
            )));
        }
        let partials: Vec<Vec<f64>> = self
            .rows
            .par_chunks(REDUCE_CHUNK)
            .zip(t.par_chunks(REDUCE_CHUNK))
            .map(|(rows, ts)| {
                let mut acc = vec![0.0; self.dim];
                for (r, &ti) in rows.iter().zip(ts) {
                    if ti != 0.0 {
                        for (j, v) in r.iter() {
                            acc[j] += ti * v;
                        }
                    }
                }
                acc
            })
            .collect();
        Ok(sum_partials(partials, self.dim))
    }

    /// `X Xᵀ v` in two sparse passes, never forming `X Xᵀ`.
    pub fn gram_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let t = self.project_vec(v)?;
        self.back_project_vec(&t)
    }

    /// `Xᵀ W` for `W` of shape `d x k`; result is `n x k`.
    pub fn project(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        if w.rows() != self.dim {
            return Err(shape_err(format!(
                "weight matrix has {} rows, expected d = {}",
                w.rows(),
                self.dim
            )));
        }
        let k = w.cols();
        let mut out = DenseMatrix::zeros(self.rows.len(), k);
        if k == 0 {
            return Ok(out);
        }
        out.as_mut_slice()
            .par_chunks_mut(k)
            .zip(self.rows.par_iter())
            .for_each(|(dst, r)| {
                for (j, v) in r.iter() {
                    for (o, &wv) in dst.iter_mut().zip(w.row(j)) {
                        *o += v * wv;
                    }
                }
            });
        Ok(out)
    }

    /// `X G` for `G` of shape `n x k`; result is `d x k`.
    pub fn back_project(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if g.rows() != self.rows.len() {
            return Err(shape_err(format!(
                "coefficient matrix has {} rows, expected n = {}",
                g.rows(),
                self.rows.len()
            )));
        }
        let k = g.cols();
        if k == 0 {
            return Ok(DenseMatrix::zeros(self.dim, 0));
        }
        let partials: Vec<Vec<f64>> = self
            .rows
            .par_chunks(REDUCE_CHUNK)
            .enumerate()
            .map(|(c, rows)| {
                let mut acc = vec![0.0; self.dim * k];
                for (off, r) in rows.iter().enumerate() {
                    let gi = g.row(c * REDUCE_CHUNK + off);
                    for (j, v) in r.iter() {
                        let dst = &mut acc[j * k..(j + 1) * k];
                        for (o, &gv) in dst.iter_mut().zip(gi) {
                            *o += v * gv;
                        }
                    }
                }
                acc
            })
            .collect();
        Ok(DenseMatrix::from_vec_unchecked(
            self.dim,
            k,
            sum_partials(partials, self.dim * k),
        ))
    }

    /// `X Xᵀ Z` for `Z` of shape `d x k`.
    pub fn gram_apply_matrix(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        let t = self.project(z)?;
        self.back_project(&t)
    }

    /// Dense `X Xᵀ` (d x d), for direct factorizations at moderate `d`.
    pub fn dense_gram(&self) -> DenseMatrix {
        let d = self.dim;
        let partials: Vec<Vec<f64>> = self
            .rows
            .par_chunks(REDUCE_CHUNK)
            .map(|rows| {
                let mut acc = vec![0.0; d * d];
                for r in rows {
                    for (a, va) in r.iter() {
                        let dst = &mut acc[a * d..(a + 1) * d];
                        for (b, vb) in r.iter() {
                            dst[b] += va * vb;
                        }
                    }
                }
                acc
            })
            .collect();
        DenseMatrix::from_vec_unchecked(d, d, sum_partials(partials, d * d))
    }

    /// Dense `n x d` copy of the example rows.
    pub fn to_dense_rows(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows.len(), self.dim);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r.iter() {
                out.set(i, j, v);
            }
        }
        out
    }
}

fn sum_partials(partials: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut it = partials.into_iter();
    let mut total = it.next().unwrap_or_else(|| vec![0.0; len]);
    for p in it {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
