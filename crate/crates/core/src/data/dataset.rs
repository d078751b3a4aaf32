use std::sync::OnceLock;

use super::dense::DenseMatrix;
use super::features::FeatureMatrix;
use super::sparse::SparseVector;
use crate::error::{shape_err, Result, SllError};

/// A multi-label dataset: sparse example features plus, per example, the set
/// of positive label ids. Absent labels are negative (`-1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    n_labels: usize,
    features: FeatureMatrix,
    labels: Vec<Vec<usize>>,
}

impl SparseDataset {
    /// Label sets are sorted and deduplicated on construction.
    pub fn new(
        n_features: usize,
        n_labels: usize,
        features: Vec<SparseVector>,
        mut labels: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(shape_err("dataset needs at least one example"));
        }
        if n_labels == 0 {
            return Err(shape_err("dataset needs at least one label"));
        }
        if features.len() != labels.len() {
            return Err(shape_err(format!(
                "{} feature rows but {} label rows",
                features.len(),
                labels.len()
            )));
        }
        for set in labels.iter_mut() {
            set.sort_unstable();
            set.dedup();
            if let Some(&id) = set.last() {
                if id >= n_labels {
                    return Err(SllError::InvalidLabelId { id, count: n_labels });
                }
            }
        }
        let features = FeatureMatrix::new(n_features, features)?;
        Ok(SparseDataset {
            n_labels,
            features,
            labels,
        })
    }

    #[inline]
    pub fn n_examples(&self) -> usize {
        self.features.n_examples()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.features.dim()
    }

    #[inline]
    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn positive_labels(&self, example: usize) -> &[usize] {
        &self.labels[example]
    }

    pub fn label_sets(&self) -> &[Vec<usize>] {
        &self.labels
    }

    /// Response vector `y*_j` of one label over all examples, entries in {-1, +1}.
    pub fn label_response(&self, label: usize) -> Result<Vec<f64>> {
        if label >= self.n_labels {
            return Err(SllError::InvalidLabelId {
                id: label,
                count: self.n_labels,
            });
        }
        Ok(self
            .labels
            .iter()
            .map(|set| if set.binary_search(&label).is_ok() { 1.0 } else { -1.0 })
            .collect())
    }

    /// Dense `n x L` label matrix in {-1, +1} built straight from the positive sets.
    pub fn dense_labels(&self) -> DenseMatrix {
        let mut y = DenseMatrix::from_vec_unchecked(
            self.n_examples(),
            self.n_labels,
            vec![-1.0; self.n_examples() * self.n_labels],
        );
        for (i, set) in self.labels.iter().enumerate() {
            for &l in set {
                y.set(i, l, 1.0);
            }
        }
        y
    }

    /// Example subset, preserving order.
    pub fn subset(&self, examples: &[usize]) -> SparseDataset {
        SparseDataset {
            n_labels: self.n_labels,
            features: self.features.subset(examples),
            labels: examples.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }
}

/// A selection of labels over a dataset, viewed as response columns `Y*`.
pub struct LabelView<'a> {
    source: &'a SparseDataset,
    selected: Vec<usize>,
    cache: OnceLock<DenseMatrix>,
}

impl<'a> LabelView<'a> {
    pub fn new(source: &'a SparseDataset, selected: Vec<usize>) -> Self {
        LabelView {
            source,
            selected,
            cache: OnceLock::new(),
        }
    }

    pub fn all(source: &'a SparseDataset) -> Self {
        Self::new(source, (0..source.n_labels()).collect())
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn source(&self) -> &SparseDataset {
        self.source
    }

    /// The `n x |selected|` matrix whose column `j` is `y*` of `selected[j]`.
    /// Computed once per view.
    pub fn materialize(&self) -> Result<&DenseMatrix> {
        if let Some(m) = self.cache.get() {
            return Ok(m);
        }
        let m = materialize_label_columns(self.source, &self.selected)?;
        Ok(self.cache.get_or_init(|| m))
    }
}

/// Response columns of `selected` labels, `n x |selected|`, entries in {-1, +1}.
pub fn materialize_label_columns(data: &SparseDataset, selected: &[usize]) -> Result<DenseMatrix> {
    if selected.is_empty() {
        return Err(shape_err("label selection is empty"));
    }
    let count = data.n_labels();
    if let Some(&id) = selected.iter().find(|&&id| id >= count) {
        return Err(SllError::InvalidLabelId { id, count });
    }
    let k = selected.len();
    let mut out = DenseMatrix::from_vec_unchecked(data.n_examples(), k, vec![-1.0; data.n_examples() * k]);
    for (i, set) in data.label_sets().iter().enumerate() {
        let row = out.row_mut(i);
        for (slot, id) in row.iter_mut().zip(selected) {
            if set.binary_search(id).is_ok() {
                *slot = 1.0;
            }
        }
    }
    Ok(out)
}
