//! Brute-force oracles, random instance generators and the per-criterion
//! checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use sll_core::data::{DenseMatrix, FeatureMatrix, SparseDataset, SparseVector};
use sll_core::engine::Learner;
use sll_core::engine::StreamSettings;
use sll_core::evaluation::{average_auc, hamming_loss, precision_at_k};
use sll_core::io::SeededRng;
use sll_core::lasso::{solve_lasso, LassoProblem, LassoSettings};
use sll_core::model::{ArrivalRecord, Hyperparams, ModelState};
use sll_core::solvers::{
    ridge_update_single, train_batch_classifier, train_joint, BatchProblem, CgConfig, LossModel, SquaredLoss,
    TrainOptions,
};
use sll_core::theory::{theorem2_sweep, Theorem2Settings};

/// Result of one acceptance check: pass flag and a one-line summary.
#[derive(Debug, Clone)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Check {
            passed,
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------- generators

pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.unit_f64()
}

pub fn int_in(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u32) as usize
}

pub fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

pub fn plus_minus(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| if rng.below(2) == 0 { -1.0 } else { 1.0 }).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// `n x d` sparse features with the given fill probability (at least one
/// nonzero per row).
pub fn sparse_features(rng: &mut SeededRng, n: usize, d: usize, density: f64) -> FeatureMatrix {
    let rows = (0..n)
        .map(|_| {
            let mut idx = Vec::new();
            let mut val = Vec::new();
            for j in 0..d {
                if rng.unit_f64() < density {
                    idx.push(j);
                    val.push(rng.normal());
                }
            }
            if idx.is_empty() {
                idx.push(rng.below(d as u32) as usize);
                val.push(1.0 + rng.unit_f64());
            }
            SparseVector::new(idx, val, d).unwrap()
        })
        .collect();
    FeatureMatrix::new(d, rows).unwrap()
}

/// `k x k` sparse coefficients with a zero diagonal.
pub fn zero_diag_coeffs(rng: &mut SeededRng, k: usize, scale: f64) -> DenseMatrix {
    let mut s = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j && rng.below(2) == 0 {
                s.set(i, j, scale * rng.normal());
            }
        }
    }
    s
}

pub fn dataset_from(features: &FeatureMatrix, labels: &DenseMatrix) -> SparseDataset {
    let sets = (0..labels.rows())
        .map(|i| (0..labels.cols()).filter(|&j| labels.get(i, j) > 0.0).collect())
        .collect();
    SparseDataset::new(features.dim(), labels.cols(), features.rows().to_vec(), sets).unwrap()
}

// ------------------------------------------------------------ dense algebra

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

/// Solves a dense system with full-pivot LU.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().full_piv_lu().solve(b).expect("oracle system is nonsingular")
}

/// `(X Xᵀ + βI)⁻¹ (X y + β prior)` formed densely.
pub fn ridge_oracle(x: &FeatureMatrix, y: &[f64], prior: &[f64], beta: f64) -> Vec<f64> {
    let xd = to_na(&x.to_dense_rows());
    let d = x.dim();
    let a = xd.transpose() * &xd + DMatrix::identity(d, d) * beta;
    let b = xd.transpose() * DVector::from_column_slice(y) + DVector::from_column_slice(prior) * beta;
    dense_solve(&a, &b).as_slice().to_vec()
}

/// Minimizer of `½‖Y − XᵀW‖² + (β/2)‖W(I − S2) − Wm S1‖²` from the
/// vectorized normal equations `(I ⊗ XXᵀ + β MMᵀ ⊗ I) vec W = vec(XY + β A Mᵀ)`.
pub fn batch_oracle(
    x: &FeatureMatrix,
    y: &DenseMatrix,
    s1: &DenseMatrix,
    s2: &DenseMatrix,
    wm: &DenseMatrix,
    beta: f64,
) -> DenseMatrix {
    let d = x.dim();
    let k = y.cols();
    let xd = to_na(&x.to_dense_rows());
    let gram = xd.transpose() * &xd;
    let m = DMatrix::identity(k, k) - to_na(s2);
    let mmt = &m * m.transpose();
    let anchor = to_na(wm) * to_na(s1);
    let rhs_mat = xd.transpose() * to_na(y) + (&anchor * m.transpose()) * beta;
    let dim = d * k;
    let mut h = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for j in 0..k {
        for i in 0..d {
            rhs[j * d + i] = rhs_mat[(i, j)];
            for l in 0..k {
                for p in 0..d {
                    let mut v = beta * mmt[(l, j)] * if i == p { 1.0 } else { 0.0 };
                    if j == l {
                        v += gram[(i, p)];
                    }
                    h[(j * d + i, l * d + p)] = v;
                }
            }
        }
    }
    let sol = dense_solve(&h, &rhs);
    let mut w = DenseMatrix::zeros(d, k);
    for j in 0..k {
        for i in 0..d {
            w.set(i, j, sol[j * d + i]);
        }
    }
    w
}

/// Batch objective recomputed entry by entry.
pub fn batch_objective_naive(
    x: &FeatureMatrix,
    y: &DenseMatrix,
    s1: &DenseMatrix,
    s2: &DenseMatrix,
    wm: &DenseMatrix,
    beta: f64,
    w: &DenseMatrix,
) -> f64 {
    let xd = x.to_dense_rows();
    let (n, k) = y.shape();
    let mut fit = 0.0;
    for i in 0..n {
        for j in 0..k {
            let t: f64 = (0..x.dim()).map(|f| xd.get(i, f) * w.get(f, j)).sum();
            fit += 0.5 * (y.get(i, j) - t).powi(2);
        }
    }
    let m = DenseMatrix::identity(k).sub(s2).unwrap();
    let r = w.matmul(&m).unwrap().sub(&wm.matmul(s1).unwrap()).unwrap();
    fit + 0.5 * beta * r.frobenius_sq()
}

// ------------------------------------------------------------- lasso oracle

/// Exact optimum of `½‖b − As‖² + λ‖s‖₁` by enumerating sign patterns and
/// solving each pattern's equality-constrained quadratic.
pub fn lasso_enumeration(a: &DenseMatrix, b: &[f64], lambda: f64, excluded: &[usize]) -> (f64, Vec<f64>) {
    let p = a.cols();
    let an = to_na(a);
    let bn = DVector::from_column_slice(b);
    let objective = |s: &DVector<f64>| -> f64 {
        let r = &bn - &an * s;
        0.5 * r.norm_squared() + lambda * s.iter().map(|v| v.abs()).sum::<f64>()
    };
    let zero = DVector::zeros(p);
    let mut best = (objective(&zero), zero.as_slice().to_vec());
    let free: Vec<usize> = (0..p).filter(|j| !excluded.contains(j)).collect();
    let patterns = 3usize.pow(free.len() as u32);
    for code in 1..patterns {
        let mut c = code;
        let mut sign = vec![0.0; p];
        for &j in &free {
            sign[j] = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| sign[j] != 0.0).collect();
        let aa = DMatrix::from_fn(a.rows(), active.len(), |i, t| a.get(i, active[t]));
        let g = aa.transpose() * &aa;
        let rhs = aa.transpose() * &bn - DVector::from_fn(active.len(), |t, _| lambda * sign[active[t]]);
        let Some(sol) = g.full_piv_lu().solve(&rhs) else { continue };
        if active.iter().enumerate().any(|(t, &j)| sol[t] * sign[j] <= 0.0) {
            continue;
        }
        let mut s = DVector::zeros(p);
        for (t, &j) in active.iter().enumerate() {
            s[j] = sol[t];
        }
        let obj = objective(&s);
        if obj < best.0 {
            best = (obj, s.as_slice().to_vec());
        }
    }
    best
}

/// Largest KKT violation recomputed from the residual.
pub fn kkt_from_residual(a: &DenseMatrix, b: &[f64], s: &[f64], lambda: f64, excluded: &[usize]) -> f64 {
    let fit = a.matvec(s).unwrap();
    let r: Vec<f64> = b.iter().zip(&fit).map(|(b, f)| b - f).collect();
    let mut worst: f64 = 0.0;
    for j in 0..a.cols() {
        if excluded.contains(&j) {
            continue;
        }
        let g: f64 = (0..a.rows()).map(|i| a.get(i, j) * r[i]).sum();
        let v = if s[j] == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * s[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

// ---------------------------------------------------------- metric oracles

pub fn hamming_oracle(scores: &DenseMatrix, truth: &DenseMatrix) -> f64 {
    let (n, l) = scores.shape();
    let mut wrong = 0;
    for i in 0..n {
        for j in 0..l {
            let pred = if scores.get(i, j) > 0.0 { 1.0 } else { -1.0 };
            if pred != truth.get(i, j) {
                wrong += 1;
            }
        }
    }
    wrong as f64 / (n * l) as f64
}

/// Label `j` is in the top `k` of row `i` when fewer than `k` labels beat it,
/// a label beating it on a tie when its index is smaller.
pub fn precision_oracle(scores: &DenseMatrix, truth: &DenseMatrix, k: usize) -> f64 {
    let (n, l) = scores.shape();
    let mut total = 0.0;
    for i in 0..n {
        let mut hits = 0;
        for j in 0..l {
            let beaten_by = (0..l)
                .filter(|&o| scores.get(i, o) > scores.get(i, j) || (scores.get(i, o) == scores.get(i, j) && o < j))
                .count();
            if beaten_by < k && truth.get(i, j) > 0.0 {
                hits += 1;
            }
        }
        total += hits as f64 / k as f64;
    }
    total / n as f64
}

/// Pairwise AUC averaged over labels with both classes; `None` if none.
pub fn auc_oracle(scores: &DenseMatrix, truth: &DenseMatrix) -> Option<f64> {
    let (n, l) = scores.shape();
    let mut sum = 0.0;
    let mut count = 0;
    for j in 0..l {
        let pos: Vec<usize> = (0..n).filter(|&i| truth.get(i, j) > 0.0).collect();
        let neg: Vec<usize> = (0..n).filter(|&i| truth.get(i, j) <= 0.0).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut twice = 0u64;
        for &p in &pos {
            for &q in &neg {
                let (a, b) = (scores.get(p, j), scores.get(q, j));
                twice += if a > b { 2 } else if a == b { 1 } else { 0 };
            }
        }
        sum += twice as f64 / (2 * pos.len() * neg.len()) as f64;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Scores on a coarse grid so that ties are common.
pub fn tied_scores(rng: &mut SeededRng, n: usize, l: usize) -> DenseMatrix {
    let data = (0..n * l).map(|_| (rng.below(9) as f64 - 4.0) / 4.0).collect();
    DenseMatrix::from_vec(n, l, data).unwrap()
}

// ----------------------------------------------------------- test-only loss

/// `ln(1 + exp(−y t))`, used only to exercise the non-quadratic path.
pub struct LogisticLoss;

impl LossModel for LogisticLoss {
    fn value(&self, y: f64, t: f64) -> f64 {
        let z = -y * t;
        if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        }
    }

    fn d1(&self, y: f64, t: f64) -> f64 {
        -y / (1.0 + (y * t).exp())
    }

    fn d2(&self, y: f64, t: f64) -> f64 {
        let s = 1.0 / (1.0 + (-y * t).exp());
        s * (1.0 - s)
    }
}

// ----------------------------------------------------------------- criteria

/// Lasso against sign-pattern enumeration, with independently recomputed
/// KKT residuals.
pub fn criterion_lasso_oracle(count: usize, seed: u64) -> Check {
    let mut rng = SeededRng::new(seed);
    let mut worst_obj: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut failures = 0;
    for t in 0..count {
        let p = int_in(&mut rng, 1, 5);
        let n = int_in(&mut rng, p + 1, 10);
        let a = gaussian(&mut rng, n, p);
        let b: Vec<f64> = if t % 2 == 0 {
            plus_minus(&mut rng, n, 1).column(0)
        } else {
            (0..n).map(|_| rng.normal()).collect()
        };
        let lambda = uniform(&mut rng, 0.05, 2.0);
        let excluded: Vec<usize> = if p > 1 && rng.below(2) == 0 { vec![rng.below(p as u32) as usize] } else { vec![] };
        let sol = solve_lasso(&LassoProblem {
            dictionary: a.clone(),
            target: b.clone(),
            lambda,
            excluded: excluded.clone(),
            settings: LassoSettings::default(),
        })
        .expect("well-formed problem");
        let (best, _) = lasso_enumeration(&a, &b, lambda, &excluded);
        let gap = (sol.objective - best).abs();
        let kkt = kkt_from_residual(&a, &b, &sol.coeffs, lambda, &excluded);
        let pinned = excluded.iter().all(|&j| sol.coeffs[j] == 0.0);
        worst_obj = worst_obj.max(gap);
        worst_kkt = worst_kkt.max(kkt);
        if gap > 1e-6 || kkt > 1e-6 || !pinned || !sol.converged {
            failures += 1;
        }
    }
    Check::new(
        failures == 0,
        format!(
            "{} problems, {} failures, max objective gap {:.2e}, max KKT {:.2e}",
            count, failures, worst_obj, worst_kkt
        ),
    )
}

/// Ridge, batch and joint trainers against dense direct solves.
pub fn criterion_solver_oracles(count: usize, seed: u64) -> Check {
    let mut rng = SeededRng::new(seed);
    let cg = CgConfig::default();
    let (mut ridge_err, mut batch_err, mut joint_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut obj_err: f64 = 0.0;
    for _ in 0..count {
        let d = int_in(&mut rng, 2, 20);
        let n = int_in(&mut rng, d + 2, 40);
        let x = sparse_features(&mut rng, n, d, 0.4);
        let beta = uniform(&mut rng, 0.1, 5.0);

        let y = plus_minus(&mut rng, n, 1).column(0);
        let prior: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let fit = ridge_update_single(&x, &y, &prior, beta, &cg).unwrap();
        let want = ridge_oracle(&x, &y, &prior, beta);
        ridge_err = ridge_err.max(fit.w.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let k = int_in(&mut rng, 1, 4);
        let m = int_in(&mut rng, 1, 6);
        let yk = plus_minus(&mut rng, n, k);
        let s1 = gaussian(&mut rng, m, k).scale(0.5);
        let s2 = zero_diag_coeffs(&mut rng, k, 0.3);
        let wm = gaussian(&mut rng, d, m);
        let problem = BatchProblem::new(&x, &yk, &s1, &s2, &wm, beta).unwrap();
        let fit = train_batch_classifier(&problem, &SquaredLoss, &cg, TrainOptions::default()).unwrap();
        let want = batch_oracle(&x, &yk, &s1, &s2, &wm, beta);
        batch_err = batch_err.max(fit.weights.max_abs_diff(&want));
        let naive = batch_objective_naive(&x, &yk, &s1, &s2, &wm, beta, &fit.weights);
        obj_err = obj_err.max((naive - fit.objective).abs() / naive.abs().max(1.0));

        let l = int_in(&mut rng, 2, 4);
        let yl = plus_minus(&mut rng, n, l);
        let s = zero_diag_coeffs(&mut rng, l, 0.3);
        let lam = uniform(&mut rng, 0.0, 3.0);
        let fit = train_joint(&x, &yl, &s, lam, &SquaredLoss, &cg, TrainOptions::default()).unwrap();
        let want = batch_oracle(&x, &yl, &DenseMatrix::zeros(0, l), &s, &DenseMatrix::zeros(d, 0), lam);
        joint_err = joint_err.max(fit.weights.max_abs_diff(&want));
    }
    let passed = ridge_err <= 1e-6 && batch_err <= 1e-6 && joint_err <= 1e-6 && obj_err <= 1e-10;
    Check::new(
        passed,
        format!(
            "{} instances each: max |dW| ridge {:.2e}, batch {:.2e}, joint {:.2e}; objective recompute {:.2e}",
            count, ridge_err, batch_err, joint_err, obj_err
        ),
    )
}

fn relative(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / a.frobenius_norm().max(b.frobenius_norm()).max(1e-12)
}

/// Gradient and Hessian-vector product against central differences, for
/// the squared loss and a logistic loss.
pub fn fd_errors(rng: &mut SeededRng, loss: &dyn LossModel) -> (f64, f64) {
    let d = int_in(rng, 2, 8);
    let n = int_in(rng, 3, 15);
    let k = int_in(rng, 1, 3);
    let m = int_in(rng, 1, 4);
    let x = sparse_features(rng, n, d, 0.5);
    let y = plus_minus(rng, n, k);
    let s1 = gaussian(rng, m, k).scale(0.5);
    let s2 = zero_diag_coeffs(rng, k, 0.4);
    let wm = gaussian(rng, d, m);
    let beta = uniform(rng, 0.0, 3.0);
    let p = BatchProblem::new(&x, &y, &s1, &s2, &wm, beta).unwrap();
    let w = gaussian(rng, d, k).scale(0.5);
    let z = gaussian(rng, d, k);
    let h = 1e-5;

    let g = p.gradient(&w, loss).unwrap();
    let mut fd = DenseMatrix::zeros(d, k);
    for i in 0..d {
        for j in 0..k {
            let mut wp = w.clone();
            wp.set(i, j, w.get(i, j) + h);
            let mut wm_ = w.clone();
            wm_.set(i, j, w.get(i, j) - h);
            let v = (p.objective(&wp, loss).unwrap() - p.objective(&wm_, loss).unwrap()) / (2.0 * h);
            fd.set(i, j, v);
        }
    }
    let hv = p.hvp(&w, &z, loss).unwrap();
    let mut wp = w.clone();
    wp.axpy(h, &z).unwrap();
    let mut wn = w.clone();
    wn.axpy(-h, &z).unwrap();
    let fd_hv = p.gradient(&wp, loss).unwrap().sub(&p.gradient(&wn, loss).unwrap()).unwrap().scale(1.0 / (2.0 * h));
    (relative(&g, &fd), relative(&hv, &fd_hv))
}

pub fn criterion_finite_differences(count: usize, seed: u64) -> Check {
    let mut rng = SeededRng::new(seed);
    let mut worst_g: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for t in 0..count {
        let (eg, eh) = if t % 2 == 0 {
            fd_errors(&mut rng, &SquaredLoss)
        } else {
            fd_errors(&mut rng, &LogisticLoss)
        };
        worst_g = worst_g.max(eg);
        worst_h = worst_h.max(eh);
    }
    Check::new(
        worst_g <= 1e-5 && worst_h <= 1e-5,
        format!("{} instances: max relative error gradient {:.2e}, HVP {:.2e}", count, worst_g, worst_h),
    )
}

/// A learner over random data with a random model for `m` past labels.
pub fn random_learner_state(rng: &mut SeededRng) -> (SparseDataset, ModelState, usize) {
    let d = int_in(rng, 3, 15);
    let n = int_in(rng, d + 5, 60);
    let l = int_in(rng, 3, 8);
    let x = sparse_features(rng, n, d, 0.4);
    let y = plus_minus(rng, n, l);
    let data = dataset_from(&x, &y);
    let m = l - 1;
    let past: Vec<usize> = (0..m).collect();
    let mut state = ModelState::new(d, Hyperparams::default());
    let rec = ArrivalRecord::from_dense(past.clone(), past, &DenseMatrix::zeros(m, m)).unwrap();
    state.register(rec, &gaussian(rng, d, m)).unwrap();
    (data, state, m)
}

/// `stream_batch` with one label against `stream_single`.
pub fn criterion_batch_of_one(count: usize, seed: u64) -> Check {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    for _ in 0..count {
        let (data, state, m) = random_learner_state(&mut rng);
        let settings = StreamSettings {
            lambda: uniform(&mut rng, 0.1, 3.0),
            beta: uniform(&mut rng, 0.1, 5.0),
            ..StreamSettings::default()
        };
        let mut a = Learner::new(&data, state.clone()).unwrap();
        let mut b = Learner::new(&data, state).unwrap();
        a.stream_single(m, &settings).unwrap();
        b.stream_batch(&[m], &settings).unwrap();
        worst = worst.max(a.state().weights().max_abs_diff(b.state().weights()));
        let sa = a.state().log().last().unwrap().to_dense();
        let sb = b.state().log().last().unwrap().to_dense().row_block(0, m);
        worst_s = worst_s.max(sa.max_abs_diff(&sb));
    }
    Check::new(
        worst <= 1e-8,
        format!("{} instances: max |dW| {:.2e}, max |ds| {:.2e}", count, worst, worst_s),
    )
}

pub fn criterion_theorem2(count: usize, seed: u64) -> Check {
    let results = theorem2_sweep(count, seed, &Theorem2Settings::default());
    let mut violations = 0;
    let mut errors = Vec::new();
    let mut tightest = f64::INFINITY;
    for (s, r) in &results {
        match r {
            Ok(rep) => {
                if !rep.holds {
                    violations += 1;
                }
                tightest = tightest.min(rep.rhs / rep.lhs.max(1e-300));
            }
            Err(e) => errors.push(format!("seed {}: {}", s, e)),
        }
    }
    Check::new(
        violations == 0 && errors.is_empty(),
        format!(
            "{} instances: {} violations, {} errors, smallest rhs/lhs {:.3}{}",
            count,
            violations,
            errors.len(),
            tightest,
            errors.first().map(|e| format!(" ({})", e)).unwrap_or_default()
        ),
    )
}

/// Metrics against brute force on small instances, plus AUC invariance under
/// strictly increasing transforms.
pub fn criterion_metric_oracles(count: usize, transforms: usize, seed: u64) -> Check {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    let mut auc_mismatch = 0;
    for t in 0..count {
        let n = int_in(&mut rng, 1, 30);
        let l = int_in(&mut rng, 1, 8);
        let scores = if t % 3 == 0 { gaussian(&mut rng, n, l) } else { tied_scores(&mut rng, n, l) };
        let truth = plus_minus(&mut rng, n, l);
        worst = worst.max((hamming_loss(&scores, &truth).unwrap() - hamming_oracle(&scores, &truth)).abs());
        for k in 1..=l {
            let got = precision_at_k(&scores, &truth, k).unwrap();
            worst = worst.max((got - precision_oracle(&scores, &truth, k)).abs());
        }
        match (average_auc(&scores, &truth), auc_oracle(&scores, &truth)) {
            (Ok(a), Some(b)) => worst = worst.max((a - b).abs()),
            (Err(_), None) => {}
            _ => auc_mismatch += 1,
        }
    }
    let mut worst_inv: f64 = 0.0;
    for t in 0..transforms {
        let n = int_in(&mut rng, 4, 30);
        let l = int_in(&mut rng, 1, 8);
        let scores = tied_scores(&mut rng, n, l);
        let mut truth = plus_minus(&mut rng, n, l);
        for j in 0..l {
            truth.set(0, j, 1.0);
            truth.set(1, j, -1.0);
        }
        let a = uniform(&mut rng, 0.1, 10.0);
        let b = rng.normal();
        let f: Box<dyn Fn(f64) -> f64> = match t % 3 {
            0 => Box::new(move |s| a * s + b),
            1 => Box::new(|s: f64| s.powi(3) + s),
            _ => Box::new(|s: f64| s.exp()),
        };
        let mut moved = scores.clone();
        for v in moved.as_mut_slice() {
            *v = f(*v);
        }
        let base = average_auc(&scores, &truth).unwrap();
        worst_inv = worst_inv.max((base - average_auc(&moved, &truth).unwrap()).abs());
    }
    Check::new(
        worst <= 1e-12 && worst_inv <= 1e-12 && auc_mismatch == 0,
        format!(
            "{} instances: max oracle gap {:.2e}; {} transforms: max AUC change {:.2e}",
            count, worst, transforms, worst_inv
        ),
    )
}
