//! Scores, ranking and classification metrics, and the binary relevance
//! baseline.
//!
//! Metric functions take an `n x L` score matrix and a `±1` truth matrix of
//! the same shape. Columns are labels; where a tie-break needs a label order
//! the column index is used, so callers pass columns in ascending label id.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::{materialize_label_columns, DenseMatrix, FeatureMatrix, SparseDataset};
use crate::error::{shape_err, Result, SllError};
use crate::model::{ArrivalRecord, Hyperparams, ModelState};
use crate::solvers::{CgConfig, RidgeSystem};

/// `f(x) = Wᵀx` for every test example and evaluated label.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub scores: DenseMatrix,
    pub label_ids: Vec<usize>,
}

pub fn predict_scores(state: &ModelState, features: &FeatureMatrix, label_ids: &[usize]) -> Result<ScoreMatrix> {
    if features.dim() != state.dim() {
        return Err(shape_err(format!(
            "test features have dimension {}, model has {}",
            features.dim(),
            state.dim()
        )));
    }
    let w = state.weights_for(label_ids)?;
    Ok(ScoreMatrix {
        scores: features.project(&w)?,
        label_ids: label_ids.to_vec(),
    })
}

fn check_shapes(scores: &DenseMatrix, truth: &DenseMatrix) -> Result<()> {
    if scores.shape() != truth.shape() {
        return Err(shape_err(format!("scores {:?} vs truth {:?}", scores.shape(), truth.shape())));
    }
    Ok(())
}

/// Fraction of cells whose predicted sign disagrees with the truth; a score
/// of exactly zero predicts `−1`.
pub fn hamming_loss(scores: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    check_shapes(scores, truth)?;
    let cells = scores.as_slice().len();
    if cells == 0 {
        return Err(shape_err("empty score matrix"));
    }
    let wrong = scores
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(&s, &t)| (s > 0.0) != (t > 0.0))
        .count();
    Ok(wrong as f64 / cells as f64)
}

/// Column indices of one row ordered by descending score, ties by ascending index.
pub fn ranked_labels(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Mean over examples of the share of positives among the top `k` scores.
pub fn precision_at_k(scores: &DenseMatrix, truth: &DenseMatrix, k: usize) -> Result<f64> {
    check_shapes(scores, truth)?;
    let (n, l) = scores.shape();
    if k == 0 || k > l {
        return Err(shape_err(format!("k = {} with {} evaluated labels", k, l)));
    }
    if n == 0 {
        return Err(shape_err("no examples to evaluate"));
    }
    let hits: usize = (0..n)
        .map(|i| {
            let t = truth.row(i);
            ranked_labels(scores.row(i))[..k].iter().filter(|&&j| t[j] > 0.0).count()
        })
        .sum();
    Ok(hits as f64 / (k * n) as f64)
}

/// ROC-AUC of one label by the rank statistic; `None` without both classes.
pub fn label_auc(scores: &[f64], truth: &[f64]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t > 0.0).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Twice the rank sum keeps tied (half-integer) ranks exact.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_avg_rank = (start + 1 + end) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| truth[i] > 0.0).count() as u128;
        twice_rank_sum += pos_in_group * twice_avg_rank;
        start = end;
    }
    let p = n_pos as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Some(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Macro average of per-label AUC over labels with both classes present.
pub fn average_auc(scores: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    check_shapes(scores, truth)?;
    let per_label: Vec<Option<f64>> = (0..scores.cols())
        .into_par_iter()
        .map(|j| label_auc(&scores.column(j), &truth.column(j)))
        .collect();
    let valid: Vec<f64> = per_label.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(SllError::AllLabelsDegenerate);
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

/// Metrics over one label subset of a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub n_labels: usize,
    /// `(k, P@k)`; `None` when `k` exceeds the evaluated label count.
    pub precision: Vec<(usize, Option<f64>)>,
    pub hamming: f64,
    /// `None` when every evaluated label is single-class on the test set.
    pub avg_auc: Option<f64>,
}

impl EvalSummary {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.precision.iter().find(|(kk, _)| *kk == k).and_then(|(_, v)| *v)
    }
}

/// Scores `labels` (sorted ascending first) on `test` and computes every metric.
pub fn evaluate(state: &ModelState, test: &SparseDataset, labels: &[usize], ks: &[usize]) -> Result<EvalSummary> {
    let mut labels = labels.to_vec();
    labels.sort_unstable();
    let scores = predict_scores(state, test.features(), &labels)?;
    let truth = materialize_label_columns(test, &labels)?;
    let precision = ks
        .iter()
        .map(|&k| {
            if k == 0 {
                Err(SllError::InvalidConfig("eval k must be >= 1".into()))
            } else if k > labels.len() {
                Ok((k, None))
            } else {
                precision_at_k(&scores.scores, &truth, k).map(|v| (k, Some(v)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let avg_auc = match average_auc(&scores.scores, &truth) {
        Ok(v) => Some(v),
        Err(SllError::AllLabelsDegenerate) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalSummary {
        n_labels: labels.len(),
        precision,
        hamming: hamming_loss(&scores.scores, &truth)?,
        avg_auc,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineFit {
    pub state: ModelState,
    /// Labels whose ridge solve missed the residual target.
    pub unconverged: Vec<usize>,
}

/// One independent ridge classifier per label:
/// `w_j = (X Xᵀ + βI)⁻¹ X y*_j`.
pub fn train_br_baseline(train: &SparseDataset, label_ids: &[usize], beta: f64, cg: &CgConfig) -> Result<BaselineFit> {
    if !(beta >= 0.0) {
        return Err(SllError::InvalidConfig(format!("beta must be >= 0, got {}", beta)));
    }
    let x = train.features();
    let system = RidgeSystem::new(x, beta)?;
    let zero = vec![0.0; x.dim()];
    let fits = label_ids
        .par_iter()
        .map(|&l| {
            let y = train.label_response(l)?;
            system.update_single(&y, &zero, cg)
        })
        .collect::<Result<Vec<_>>>()?;
    let unconverged = label_ids
        .iter()
        .zip(&fits)
        .filter(|(_, f)| !f.converged)
        .map(|(&l, _)| l)
        .collect();
    let columns: Vec<Vec<f64>> = fits.into_iter().map(|f| f.w).collect();
    let weights = if columns.is_empty() {
        DenseMatrix::zeros(x.dim(), 0)
    } else {
        DenseMatrix::from_columns(&columns)?
    };
    let hyper = Hyperparams {
        beta,
        ..Hyperparams::default()
    };
    let mut state = ModelState::new(x.dim(), hyper);
    let record = ArrivalRecord {
        arrived: label_ids.to_vec(),
        basis: Vec::new(),
        coeffs: vec![Vec::new(); label_ids.len()],
    };
    state.register(record, &weights)?;
    Ok(BaselineFit { state, unconverged })
}
