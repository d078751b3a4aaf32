//! Initialization over past labels and the streaming updates for arriving
//! labels, singly or in batches.

mod bank;
mod run;

use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;

use crate::data::{DenseMatrix, FeatureMatrix, LabelView, SparseDataset};
use crate::error::{shape_err, Result, SllError};
use crate::lasso::{reduce_dictionary, solve_batch_representation_gram, solve_gram_lasso, LassoSettings};
use crate::model::{ArrivalRecord, Hyperparams, ModelState};
use crate::solvers::{train_batch_classifier, train_joint, BatchProblem, CgConfig, RidgeSystem, SquaredLoss, TrainOptions};

use bank::LabelBank;

pub use run::{resume_stream, run_stream, select_beta, validation_split, BetaSelection, Method, RunConfig, RunReport, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Sparsity weight on `S`.
    pub lambda1: f64,
    /// Weight of the classifier self-representation term `‖W − WS‖²`.
    pub lambda2: f64,
    /// Weight of the label self-representation term `‖Y* − Y*S‖²`.
    pub lambda3: f64,
    pub max_alt_iters: usize,
    /// Stop when one alternation lowers the objective by less than this fraction.
    pub rel_obj_tol: f64,
    /// Drop label data during the classifier step and feature factorizations
    /// during the structure step, rebuilding them on every phase.
    pub staged: bool,
    pub lasso: LassoSettings,
    pub cg: CgConfig,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 10.0,
            max_alt_iters: 50,
            rel_obj_tol: 1e-5,
            staged: false,
            lasso: LassoSettings::default(),
            cg: CgConfig::default(),
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SllError::InvalidConfig(format!("{} must be > 0, got {}", name, v)));
            }
        }
        if !(self.rel_obj_tol >= 0.0) {
            return Err(SllError::InvalidConfig(format!("rel_obj_tol must be >= 0, got {}", self.rel_obj_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    /// Objective at the ridge start (`S = 0`), then after every alternation.
    pub objective_trace: Vec<f64>,
    pub alternations: usize,
    /// Relative decrease fell below `rel_obj_tol`.
    pub converged: bool,
    pub lasso_unconverged: usize,
    pub train_unconverged: usize,
    pub lasso_time_s: f64,
    pub train_time_s: f64,
}

impl InitReport {
    pub fn solvers_converged(&self) -> bool {
        self.lasso_unconverged == 0 && self.train_unconverged == 0
    }
}

/// Settings of the streaming updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamSettings {
    pub lambda: f64,
    pub beta: f64,
    /// Reduce the single-label dictionary to this many medoid labels.
    pub dict_limit: Option<usize>,
    pub dict_seed: u64,
    pub lasso: LassoSettings,
    pub cg: CgConfig,
}

impl Default for StreamSettings {
    fn default() -> Self {
        StreamSettings {
            lambda: 1.0,
            beta: 1.0,
            dict_limit: None,
            dict_seed: 0,
            lasso: LassoSettings::default(),
            cg: CgConfig::default(),
        }
    }
}

impl StreamSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(SllError::InvalidConfig(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(SllError::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.dict_limit == Some(0) {
            return Err(SllError::InvalidConfig("dict_limit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamStepReport {
    pub arrived_label_ids: Vec<usize>,
    /// Sum of the per-label representation objectives.
    pub lasso_objective: f64,
    pub representation_nnz: usize,
    /// Ridge residual for a single label, gradient norm for a batch.
    pub classifier_train_residual: f64,
    pub lasso_converged: bool,
    pub train_converged: bool,
    pub lasso_time_s: f64,
    pub train_time_s: f64,
}

impl StreamStepReport {
    pub fn converged(&self) -> bool {
        self.lasso_converged && self.train_converged
    }
}

/// `½‖Y* − XᵀW‖² + λ1‖S‖₁ + (λ2/2)‖W − WS‖² + (λ3/2)‖Y* − Y*S‖²`.
pub fn init_objective(
    features: &FeatureMatrix,
    labels: &DenseMatrix,
    weights: &DenseMatrix,
    structure: &DenseMatrix,
    cfg: &InitConfig,
) -> Result<f64> {
    let fit = labels.sub(&features.project(weights)?)?.frobenius_sq();
    let w_res = weights.sub(&weights.matmul(structure)?)?.frobenius_sq();
    let y_res = labels.sub(&labels.matmul(structure)?)?.frobenius_sq();
    Ok(0.5 * fit + cfg.lambda1 * structure.l11_norm() + 0.5 * cfg.lambda2 * w_res + 0.5 * cfg.lambda3 * y_res)
}

/// Learner bound to one training set: the model plus cached label data and
/// feature factorizations.
pub struct Learner<'a> {
    train: &'a SparseDataset,
    state: ModelState,
    bank: LabelBank,
    ridge: Option<RidgeSystem<'a>>,
}

impl<'a> Learner<'a> {
    /// Wraps an existing model, e.g. one loaded from disk.
    pub fn new(train: &'a SparseDataset, state: ModelState) -> Result<Self> {
        if state.dim() != train.n_features() {
            return Err(shape_err(format!(
                "model has dimension {}, training data {}",
                state.dim(),
                train.n_features()
            )));
        }
        let mut bank = LabelBank::default();
        for &l in state.label_ids() {
            bank.push(train.label_response(l)?);
        }
        Ok(Learner {
            train,
            state,
            bank,
            ridge: None,
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    pub fn train(&self) -> &'a SparseDataset {
        self.train
    }

    fn ridge_system(&mut self, beta: f64) -> Result<&RidgeSystem<'a>> {
        let stale = self.ridge.as_ref().map_or(true, |r| r.beta() != beta);
        if stale {
            self.ridge = Some(RidgeSystem::new(self.train.features(), beta)?);
        }
        Ok(self.ridge.as_ref().expect("just built"))
    }

    fn check_new(&self, labels: &[usize]) -> Result<()> {
        if labels.is_empty() {
            return Err(SllError::InvalidConfig("an arriving batch needs at least one label".into()));
        }
        if self.state.n_labels() == 0 {
            return Err(SllError::InvalidConfig("streaming needs at least one past label".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &l in labels {
            if l >= self.train.n_labels() {
                return Err(SllError::InvalidLabelId {
                    id: l,
                    count: self.train.n_labels(),
                });
            }
            if self.state.contains(l) || !seen.insert(l) {
                return Err(SllError::DuplicateLabel(l));
            }
        }
        Ok(())
    }

    /// One arriving label: sparse representation over the past labels, the
    /// prior `W_m s`, then the closed-form classifier toward that prior.
    pub fn stream_single(&mut self, label: usize, settings: &StreamSettings) -> Result<StreamStepReport> {
        settings.validate()?;
        self.check_new(&[label])?;
        let y_new = self.train.label_response(label)?;
        let m = self.state.n_labels();

        let t0 = Instant::now();
        let positions: Vec<usize> = match settings.dict_limit {
            Some(p) if p < m => {
                let view = LabelView::new(self.train, self.state.label_ids().to_vec());
                let chosen = reduce_dictionary(&view, p, settings.dict_seed)?;
                chosen.iter().map(|&l| self.state.position(l)).collect::<Result<_>>()?
            }
            _ => (0..m).collect(),
        };
        let gram = self.bank.gram(&positions);
        let cross = self.bank.cross(&y_new);
        let corr: Vec<f64> = positions.iter().map(|&i| cross[i]).collect();
        let target_sq = crate::data::dot(&y_new, &y_new);
        let excluded = vec![false; positions.len()];
        let sol = solve_gram_lasso(&gram, &corr, target_sq, settings.lambda, &excluded, None, &settings.lasso)?;
        let lasso_time_s = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let basis: Vec<usize> = positions.iter().map(|&i| self.state.label_ids()[i]).collect();
        let coeffs: Vec<(usize, f64)> = sol
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        let prior = self.state.prior(&basis, &coeffs)?;
        let fit = self.ridge_system(settings.beta)?.update_single(&y_new, &prior, &settings.cg)?;
        let train_time_s = t1.elapsed().as_secs_f64();
        if !fit.converged {
            warn!("ridge update for label {} stopped at residual {:e}", label, fit.residual_norm);
        }

        let nnz = coeffs.len();
        let record = ArrivalRecord {
            arrived: vec![label],
            basis,
            coeffs: vec![coeffs],
        };
        let w = DenseMatrix::from_columns(&[fit.w])?;
        self.state.register(record, &w)?;
        self.bank.push(y_new);
        Ok(StreamStepReport {
            arrived_label_ids: vec![label],
            lasso_objective: sol.objective,
            representation_nnz: nnz,
            classifier_train_residual: fit.residual_norm,
            lasso_converged: sol.converged,
            train_converged: fit.converged,
            lasso_time_s,
            train_time_s,
        })
    }

    /// A batch of arriving labels: joint representation over past and new
    /// labels, then the coupled classifier objective.
    pub fn stream_batch(&mut self, labels: &[usize], settings: &StreamSettings) -> Result<StreamStepReport> {
        settings.validate()?;
        self.check_new(labels)?;
        let k = labels.len();
        let m = self.state.n_labels();
        let new_cols = labels
            .iter()
            .map(|&l| self.train.label_response(l))
            .collect::<Result<Vec<_>>>()?;

        let t0 = Instant::now();
        let gram = self.bank.extended_gram(&new_cols);
        let rep = solve_batch_representation_gram(&gram, k, settings.lambda, &settings.lasso)?;
        let lasso_time_s = t0.elapsed().as_secs_f64();
        let unconverged = rep.not_converged();
        if !unconverged.is_empty() {
            warn!("representation columns {:?} hit the sweep cap", unconverged);
        }

        let t1 = Instant::now();
        let targets = DenseMatrix::from_columns(&new_cols)?;
        let s1 = rep.past_block();
        let s2 = rep.new_block();
        let past_weights = self.state.weights().clone();
        let features = self.train.features();
        let problem = BatchProblem::new(features, &targets, &s1, &s2, &past_weights, settings.beta)?;
        let precond = self.ridge_system(settings.beta)?;
        let fit = train_batch_classifier(
            &problem,
            &SquaredLoss,
            &settings.cg,
            TrainOptions {
                warm_start: None,
                preconditioner: precond.has_factor().then_some(precond),
            },
        )?;
        let train_time_s = t1.elapsed().as_secs_f64();
        if !fit.converged {
            warn!("batch classifier stopped at gradient norm {:e}", fit.gradient_norm);
        }

        let mut basis = self.state.label_ids().to_vec();
        basis.extend_from_slice(labels);
        debug_assert_eq!(basis.len(), m + k);
        let record = ArrivalRecord::from_dense(labels.to_vec(), basis, &rep.s_new)?;
        let nnz = record.nnz();
        self.state.register(record, &fit.weights)?;
        for y in new_cols {
            self.bank.push(y);
        }
        Ok(StreamStepReport {
            arrived_label_ids: labels.to_vec(),
            lasso_objective: rep.total_objective(),
            representation_nnz: nnz,
            classifier_train_residual: fit.gradient_norm,
            lasso_converged: unconverged.is_empty(),
            train_converged: fit.converged,
            lasso_time_s,
            train_time_s,
        })
    }
}

/// Alternating minimization over `(W, S)` for the past labels, starting
/// from `S = 0` (a ridge fit).
pub fn initialize<'a>(
    train: &'a SparseDataset,
    past_labels: &[usize],
    cfg: &InitConfig,
    hyper: Hyperparams,
) -> Result<(Learner<'a>, InitReport)> {
    cfg.validate()?;
    if past_labels.is_empty() {
        return Err(SllError::InvalidConfig("initialization needs at least one past label".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for &l in past_labels {
        if !seen.insert(l) {
            return Err(SllError::DuplicateLabel(l));
        }
    }
    let m = past_labels.len();
    let features = train.features();
    let labels = LabelView::new(train, past_labels.to_vec());
    let ystar = labels.materialize()?.clone();

    let mut lasso_time_s = 0.0;
    let mut train_time_s = 0.0;
    let mut lasso_unconverged = 0;
    let mut train_unconverged = 0;

    let mut label_gram: Option<DenseMatrix> = None;
    let mut precond: Option<RidgeSystem<'_>> = None;
    let build_precond = || -> Result<Option<RidgeSystem<'_>>> {
        let r = RidgeSystem::new(features, cfg.lambda2)?;
        Ok(r.has_factor().then_some(r))
    };

    let t = Instant::now();
    let mut s = DenseMatrix::zeros(m, m);
    if !cfg.staged {
        precond = build_precond()?;
    }
    let fit = train_joint(
        features,
        &ystar,
        &s,
        cfg.lambda2,
        &SquaredLoss,
        &cfg.cg,
        TrainOptions {
            warm_start: None,
            preconditioner: precond.as_ref(),
        },
    )?;
    train_time_s += t.elapsed().as_secs_f64();
    if !fit.converged {
        train_unconverged += 1;
    }
    let mut w = fit.weights;
    let mut trace = vec![init_objective(features, &ystar, &w, &s, cfg)?];
    let mut converged = false;
    let mut alternations = 0;

    for _ in 0..cfg.max_alt_iters {
        alternations += 1;

        // Structure step: one lasso per column over the stacked design
        // [√λ3 Y*; √λ2 W], whose Gram is λ3 Y*ᵀY* + λ2 WᵀW.
        let t = Instant::now();
        if cfg.staged {
            precond = None;
        }
        let gy = match &label_gram {
            Some(g) => g.clone(),
            None => {
                let g = crate::lasso::column_gram(&ystar);
                if !cfg.staged {
                    label_gram = Some(g.clone());
                }
                g
            }
        };
        let gw = w.transpose().matmul(&w)?;
        let gram = gy.scale(cfg.lambda3).add(&gw.scale(cfg.lambda2))?;
        let columns = (0..m)
            .into_par_iter()
            .map(|i| {
                let corr = gram.column(i);
                let mut excluded = vec![false; m];
                excluded[i] = true;
                let warm = s.column(i);
                solve_gram_lasso(&gram, &corr, gram.get(i, i), cfg.lambda1, &excluded, Some(&warm), &cfg.lasso)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut next_s = DenseMatrix::zeros(m, m);
        for (i, col) in columns.iter().enumerate() {
            if !col.converged {
                lasso_unconverged += 1;
            }
            for (r, &v) in col.coeffs.iter().enumerate() {
                next_s.set(r, i, v);
            }
        }
        s = next_s;
        lasso_time_s += t.elapsed().as_secs_f64();

        // Classifier step under the fixed structure.
        let t = Instant::now();
        if precond.is_none() {
            precond = build_precond()?;
        }
        let fit = train_joint(
            features,
            &ystar,
            &s,
            cfg.lambda2,
            &SquaredLoss,
            &cfg.cg,
            TrainOptions {
                warm_start: Some(&w),
                preconditioner: precond.as_ref(),
            },
        )?;
        train_time_s += t.elapsed().as_secs_f64();
        if !fit.converged {
            train_unconverged += 1;
        }
        w = fit.weights;

        let obj = init_objective(features, &ystar, &w, &s, cfg)?;
        let prev = *trace.last().expect("non-empty");
        trace.push(obj);
        debug!("alternation {}: objective {}", alternations, obj);
        if prev - obj <= cfg.rel_obj_tol * prev.abs() {
            converged = true;
            break;
        }
    }

    let mut state = ModelState::new(train.n_features(), hyper);
    let record = ArrivalRecord::from_dense(past_labels.to_vec(), past_labels.to_vec(), &s)?;
    state.register(record, &w)?;
    let mut bank = LabelBank::default();
    for j in 0..m {
        bank.push(ystar.column(j));
    }
    let ridge = None;
    let learner = Learner {
        train,
        state,
        bank,
        ridge,
    };
    Ok((
        learner,
        InitReport {
            objective_trace: trace,
            alternations,
            converged,
            lasso_unconverged,
            train_unconverged,
            lasso_time_s,
            train_time_s,
        },
    ))
}

/// Structure matrix `S` (`m x m`) recorded at initialization.
pub fn initial_structure(state: &ModelState) -> Option<DenseMatrix> {
    state.log().first().map(|r| r.to_dense())
}
