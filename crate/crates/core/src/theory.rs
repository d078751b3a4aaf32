//! Numeric checks of the two guarantees: the approximation bound between
//! streamed and jointly trained classifiers, and the components of the
//! generalization bound.

use rayon::prelude::*;

use crate::data::{DenseMatrix, SparseDataset};
use crate::engine::{Learner, StreamSettings};
use crate::error::{shape_err, Result, SllError};
use crate::lasso::{solve_batch_representation, LassoSettings};
use crate::model::{ArrivalRecord, Hyperparams, ModelState};
use crate::solvers::{train_joint, CgConfig, SquaredLoss, TrainOptions};
use crate::synthetic::dense_instance;

/// Singular values below this mark `X` as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Largest `d` and label count accepted by the dense checks.
pub const MAX_DENSE_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Settings {
    /// Weight of the structure term when training jointly.
    pub lambda_struct: f64,
    /// Lasso weight for every structure matrix.
    pub lambda: f64,
    /// Prior weight of the streamed classifier.
    pub beta: f64,
    pub lasso: LassoSettings,
    pub cg: CgConfig,
}

impl Default for Theorem2Settings {
    fn default() -> Self {
        Theorem2Settings {
            lambda_struct: 1.0,
            lambda: 1.0,
            beta: 1.0,
            lasso: LassoSettings {
                tol: 1e-10,
                max_sweeps: 100_000,
            },
            cg: CgConfig {
                rel_tol: 1e-12,
                max_iters: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Report {
    pub n: usize,
    pub d: usize,
    /// Number of labels trained jointly before the streamed one.
    pub k: usize,
    /// `‖Ŵ_{k+1} − [Ŵ_k, ŵ]‖_F`.
    pub lhs: f64,
    pub rhs: f64,
    /// `½‖Y − Z̃ᵀX‖²_F` of the streamed model `Z̃ = [Ŵ_k, ŵ]`.
    pub c_loss: f64,
    /// `‖Y − Z̃ᵀX‖_F`.
    pub residual_norm: f64,
    /// `|‖Y − Z̃ᵀX‖_F − √(2C)|`.
    pub identity_gap: f64,
    /// Largest squared example norm.
    pub omega: f64,
    pub sigma_x: f64,
    pub sigma_is: f64,
    /// `‖I − S‖²_F`.
    pub tau: f64,
    pub holds: bool,
}

fn sigma_min(m: &DenseMatrix) -> f64 {
    m.to_nalgebra().singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Structure over all labels of `labels`, each column excluding itself.
fn structure(labels: &DenseMatrix, s: &Theorem2Settings) -> Result<DenseMatrix> {
    Ok(solve_batch_representation(labels, labels.cols(), s.lambda, &s.lasso)?.s_new)
}

/// Compares the joint classifier over `k + 1` labels with the one obtained
/// by training the first `k` jointly and streaming the last one.
pub fn verify_theorem2(data: &SparseDataset, settings: &Theorem2Settings) -> Result<Theorem2Report> {
    let (n, d, total) = (data.n_examples(), data.n_features(), data.n_labels());
    if total < 2 {
        return Err(SllError::InvalidConfig("need at least two labels".into()));
    }
    if d > MAX_DENSE_SIZE || total > MAX_DENSE_SIZE {
        return Err(SllError::InvalidConfig(format!(
            "dense check limited to d, labels <= {}; got d = {}, labels = {}",
            MAX_DENSE_SIZE, d, total
        )));
    }
    if d > n {
        return Err(SllError::RankDeficientFeatures(0.0));
    }
    let x = data.features();
    let sigma_x = sigma_min(&x.to_dense_rows());
    if !(sigma_x > RANK_TOL) {
        return Err(SllError::RankDeficientFeatures(sigma_x));
    }
    let k = total - 1;
    let y = data.dense_labels();
    let first: Vec<usize> = (0..k).collect();
    let y_k = y.select_columns(&first);

    let opts = || TrainOptions::default();
    let s_all = structure(&y, settings)?;
    let joint = train_joint(x, &y, &s_all, settings.lambda_struct, &SquaredLoss, &settings.cg, opts())?;
    let s_k = structure(&y_k, settings)?;
    let w_k = train_joint(x, &y_k, &s_k, settings.lambda_struct, &SquaredLoss, &settings.cg, opts())?;
    if !joint.converged || !w_k.converged {
        return Err(SllError::NotConverged {
            what: "joint classifier".into(),
            detail: format!("gradient norms {:e} and {:e}", joint.gradient_norm, w_k.gradient_norm),
        });
    }

    let hyper = Hyperparams {
        lambda: settings.lambda,
        beta: settings.beta,
        lambda2: settings.lambda_struct,
        ..Hyperparams::default()
    };
    let mut state = ModelState::new(d, hyper);
    state.register(ArrivalRecord::from_dense(first.clone(), first, &s_k)?, &w_k.weights)?;
    let mut learner = Learner::new(data, state)?;
    let stream = StreamSettings {
        lambda: settings.lambda,
        beta: settings.beta,
        lasso: settings.lasso,
        cg: settings.cg,
        ..StreamSettings::default()
    };
    learner.stream_single(k, &stream)?;
    let streamed = learner.into_state();
    let z = streamed.weights().clone();
    let w_hat = streamed.classifier(k)?;

    let lhs = joint.weights.sub(&z)?.frobenius_norm();
    let residual = y.sub(&x.project(&z)?)?;
    let residual_norm = residual.frobenius_norm();
    let c_loss = 0.5 * residual.frobenius_sq();
    let identity_gap = (residual_norm - (2.0 * c_loss).sqrt()).abs();
    if identity_gap > 1e-10 * residual_norm.max(1.0) {
        return Err(shape_err(format!("residual identity off by {:e}", identity_gap)));
    }
    let omega = x.max_squared_norm();
    let i_minus_s = DenseMatrix::identity(total).sub(&s_all)?;
    let sigma_is = sigma_min(&i_minus_s);
    let tau = i_minus_s.frobenius_sq();
    let lam = settings.lambda_struct;
    let w_norm_sq = w_k.weights.frobenius_sq() + w_hat.iter().map(|v| v * v).sum::<f64>();
    let rhs = 2.0 / (lam * sigma_is * sigma_is + sigma_x * sigma_x)
        * ((n as f64 * omega).sqrt() * residual_norm + lam * tau * w_norm_sq.sqrt());
    Ok(Theorem2Report {
        n,
        d,
        k,
        lhs,
        rhs,
        c_loss,
        residual_norm,
        identity_gap,
        omega,
        sigma_x,
        sigma_is,
        tau,
        holds: lhs <= rhs,
    })
}

/// Seeded instances of the default sweep shape: `n = 40`, `d = 5`, three
/// jointly trained labels plus one streamed.
pub fn theorem2_instance(seed: u64) -> Result<SparseDataset> {
    dense_instance(40, 5, 4, seed)
}

/// Runs the check on `count` seeded instances, in parallel.
pub fn theorem2_sweep(count: usize, base_seed: u64, settings: &Theorem2Settings) -> Vec<(u64, Result<Theorem2Report>)> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            (seed, theorem2_instance(seed).and_then(|data| verify_theorem2(&data, settings)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Terms {
    /// `‖W − W_old S‖_F`.
    pub epsilon: f64,
    /// `‖S‖_{1,1}`.
    pub lambda_cap: f64,
    /// `‖W_old‖_F`.
    pub c: f64,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
    /// `(ε + λ c) √(k/n)`.
    pub term_main: f64,
    /// `k √(ln(1/δ)/n)`.
    pub term_conf: f64,
}

/// Components of the generalization bound for new classifiers `w` (`d x k`)
/// represented over past classifiers `w_old` (`d x m`) by `s` (`m x k`).
pub fn theorem1_terms(w: &DenseMatrix, w_old: &DenseMatrix, s: &DenseMatrix, n: usize, delta: f64) -> Result<Theorem1Terms> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SllError::InvalidConfig(format!("delta must lie in (0, 1), got {}", delta)));
    }
    if n == 0 {
        return Err(SllError::InvalidConfig("n must be >= 1".into()));
    }
    let k = w.cols();
    let epsilon = w.sub(&w_old.matmul(s)?)?.frobenius_norm();
    let lambda_cap = s.l11_norm();
    let c = w_old.frobenius_norm();
    let nf = n as f64;
    Ok(Theorem1Terms {
        epsilon,
        lambda_cap,
        c,
        k,
        n,
        delta,
        term_main: (epsilon + lambda_cap * c) * (k as f64 / nf).sqrt(),
        term_conf: k as f64 * ((1.0 / delta).ln() / nf).sqrt(),
    })
}
