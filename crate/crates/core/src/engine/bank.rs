use rayon::prelude::*;

use crate::data::{dot, DenseMatrix};

/// Response vectors of registered labels with their pairwise inner
/// products, grown one label at a time.
#[derive(Debug, Clone, Default)]
pub(crate) struct LabelBank {
    columns: Vec<Vec<f64>>,
    /// Row `i` holds `⟨y_i, y_j⟩` for `j ≤ i`.
    gram: Vec<Vec<f64>>,
}

impl LabelBank {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn push(&mut self, y: Vec<f64>) {
        let mut row = self.cross(&y);
        row.push(dot(&y, &y));
        self.columns.push(y);
        self.gram.push(row);
    }

    fn inner(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.gram[i][j]
        } else {
            self.gram[j][i]
        }
    }

    /// `⟨y_j, v⟩` for every stored column.
    pub fn cross(&self, v: &[f64]) -> Vec<f64> {
        self.columns.par_iter().map(|c| dot(c, v)).collect()
    }

    /// Gram matrix of the stored columns at `idx`.
    pub fn gram(&self, idx: &[usize]) -> DenseMatrix {
        let p = idx.len();
        let mut g = DenseMatrix::zeros(p, p);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                g.set(a, b, self.inner(i, j));
            }
        }
        g
    }

    /// Gram matrix of all stored columns followed by `extra`.
    pub fn extended_gram(&self, extra: &[Vec<f64>]) -> DenseMatrix {
        let m = self.len();
        let k = extra.len();
        let all: Vec<usize> = (0..m).collect();
        let base = self.gram(&all);
        let cross: Vec<Vec<f64>> = extra.iter().map(|e| self.cross(e)).collect();
        let mut g = DenseMatrix::zeros(m + k, m + k);
        for i in 0..m {
            g.row_mut(i)[..m].copy_from_slice(base.row(i));
        }
        for (a, e) in extra.iter().enumerate() {
            for i in 0..m {
                g.set(m + a, i, cross[a][i]);
                g.set(i, m + a, cross[a][i]);
            }
            for (b, f) in extra.iter().enumerate().take(a + 1) {
                let v = dot(e, f);
                g.set(m + a, m + b, v);
                g.set(m + b, m + a, v);
            }
        }
        g
    }
}
