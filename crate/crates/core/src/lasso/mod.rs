//! Sparse label self-representation.
//!
//! Every problem here has the form
//! `min_s ½‖b − A s‖² + λ‖s‖₁` with some coordinates of `s` pinned to zero.
//! The solver is cyclic coordinate descent run on the covariance form
//! (`G = AᵀA`, `c = Aᵀb`), which performs exactly the same coordinate
//! updates as residual-form descent but lets many targets share one `G`.

mod cluster;

use rayon::prelude::*;

use crate::data::{dot, DenseMatrix};
use crate::error::{shape_err, Result, SllError};

pub use cluster::{cluster_medoids, reduce_dictionary};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 1000;

/// `sign(v) * max(|v| - t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    /// Bound on the KKT violation at return.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl LassoSettings {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(SllError::InvalidConfig(format!("lasso tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Single-target problem over a dense dictionary whose columns are the
/// candidate label response vectors.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub dictionary: DenseMatrix,
    pub target: Vec<f64>,
    pub lambda: f64,
    /// Columns forced to zero.
    pub excluded: Vec<usize>,
    pub settings: LassoSettings,
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coeffs: Vec<f64>,
    /// `½‖b − A s‖² + λ‖s‖₁` at `coeffs`.
    pub objective: f64,
    /// Objective before the first sweep, then after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps_used: usize,
    /// Largest stationarity residual over non-excluded coordinates.
    pub kkt_violation: f64,
    pub converged: bool,
}

impl LassoSolution {
    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|v| **v != 0.0).count()
    }

    /// Turns a flagged non-converged solution into an error.
    pub fn into_result(self) -> Result<LassoSolution> {
        if self.converged {
            Ok(self)
        } else {
            Err(SllError::NotConverged {
                what: "lasso".into(),
                detail: format!(
                    "KKT violation {:e} after {} sweeps",
                    self.kkt_violation, self.sweeps_used
                ),
            })
        }
    }
}

/// KKT violation of `coeffs` given the correlations `grad_j = a_jᵀ(b − A s)`.
pub fn kkt_violation(grad: &[f64], coeffs: &[f64], lambda: f64, excluded: &[bool]) -> f64 {
    grad.iter()
        .zip(coeffs)
        .zip(excluded)
        .filter(|(_, &ex)| !ex)
        .map(|((&g, &s), _)| {
            if s == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * s.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent on `½ bᵀb − cᵀs + ½ sᵀGs + λ‖s‖₁`.
pub fn solve_gram_lasso(
    gram: &DenseMatrix,
    corr: &[f64],
    target_sq: f64,
    lambda: f64,
    excluded: &[bool],
    warm_start: Option<&[f64]>,
    settings: &LassoSettings,
) -> Result<LassoSolution> {
    let p = corr.len();
    if gram.shape() != (p, p) || excluded.len() != p {
        return Err(shape_err(format!(
            "gram {:?}, {} correlations, {} exclusion flags",
            gram.shape(),
            p,
            excluded.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(SllError::InvalidConfig(format!("lambda must be > 0, got {}", lambda)));
    }
    settings.validate()?;

    let mut s = match warm_start {
        Some(w) if w.len() == p => w.to_vec(),
        Some(w) => return Err(shape_err(format!("warm start of length {} for {} coeffs", w.len(), p))),
        None => vec![0.0; p],
    };
    for (v, &ex) in s.iter_mut().zip(excluded) {
        if ex {
            *v = 0.0;
        }
    }

    let eval = |s: &[f64]| -> (Vec<f64>, f64, f64) {
        let q = gram.matvec(s).expect("shape checked");
        let grad: Vec<f64> = corr.iter().zip(&q).map(|(c, q)| c - q).collect();
        let l1: f64 = s.iter().map(|v| v.abs()).sum();
        let obj = 0.5 * target_sq - dot(corr, s) + 0.5 * dot(s, &q) + lambda * l1;
        let kkt = kkt_violation(&grad, s, lambda, excluded);
        (q, obj, kkt)
    };

    let (mut q, obj0, mut kkt) = eval(&s);
    let mut trace = vec![obj0];
    let mut sweeps = 0;
    while kkt > settings.tol && sweeps < settings.max_sweeps {
        for j in 0..p {
            let gjj = gram.get(j, j);
            if excluded[j] || gjj <= 0.0 {
                continue;
            }
            let old = s[j];
            let rho = corr[j] - q[j] + gjj * old;
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                s[j] = new;
                for (qi, &g) in q.iter_mut().zip(gram.row(j)) {
                    *qi += delta * g;
                }
            }
        }
        sweeps += 1;
        let (q_fresh, obj, k) = eval(&s);
        q = q_fresh;
        kkt = k;
        trace.push(obj);

        if kkt > settings.tol {
            if let Some(cand) = face_descent(gram, corr, lambda, &s) {
                let (q_c, obj_c, kkt_c) = eval(&cand);
                if obj_c <= obj {
                    s = cand;
                    q = q_c;
                    kkt = kkt_c;
                    trace.push(obj_c);
                }
            }
        }
    }

    Ok(LassoSolution {
        objective: *trace.last().unwrap(),
        coeffs: s,
        objective_trace: trace,
        sweeps_used: sweeps,
        kkt_violation: kkt,
        converged: kkt <= settings.tol,
    })
}

/// Active-set descent on the sign face of `s`. Solves
/// `G_AA x = c_A − λ sign(s_A)` on the support `A`; if `x` leaves the face,
/// moves to the first sign crossing, drops that coordinate and repeats.
/// The smooth face objective is convex with minimum at `x`, so every move
/// decreases the objective. `None` when nothing moved.
fn face_descent(gram: &DenseMatrix, corr: &[f64], lambda: f64, s: &[f64]) -> Option<Vec<f64>> {
    let mut cur = s.to_vec();
    let mut moved = false;
    loop {
        let support: Vec<usize> = (0..cur.len()).filter(|&j| cur[j] != 0.0).collect();
        if support.is_empty() {
            break;
        }
        let a = support.len();
        let g = nalgebra::DMatrix::from_fn(a, a, |i, j| gram.get(support[i], support[j]));
        let rhs = nalgebra::DVector::from_fn(a, |i, _| corr[support[i]] - lambda * cur[support[i]].signum());
        let Some(chol) = g.cholesky() else { break };
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
        // First crossing along cur -> x.
        let mut t_min = 1.0;
        let mut hit = None;
        for (i, &j) in support.iter().enumerate() {
            if x[i] * cur[j] <= 0.0 {
                let t = cur[j] / (cur[j] - x[i]);
                if t < t_min {
                    t_min = t;
                    hit = Some(j);
                }
            }
        }
        moved = true;
        for (i, &j) in support.iter().enumerate() {
            cur[j] += t_min * (x[i] - cur[j]);
        }
        match hit {
            None => break,
            Some(j) => {
                cur[j] = 0.0;
                for &k in &support {
                    if cur[k] != 0.0 && cur[k].signum() != s[k].signum() {
                        cur[k] = 0.0;
                    }
                }
            }
        }
    }
    moved.then_some(cur)
}

/// `AᵀA` for a dense `n x p` matrix.
pub fn column_gram(a: &DenseMatrix) -> DenseMatrix {
    let p = a.cols();
    let at = a.transpose();
    let mut g = DenseMatrix::zeros(p, p);
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| (0..p).map(|j| if j < i { 0.0 } else { dot(at.row(i), at.row(j)) }).collect())
        .collect();
    for i in 0..p {
        for j in i..p {
            g.set(i, j, rows[i][j]);
            g.set(j, i, rows[i][j]);
        }
    }
    g
}

/// Solves a single-target problem; the returned objective is recomputed
/// from the residual.
pub fn solve_lasso(problem: &LassoProblem) -> Result<LassoSolution> {
    let a = &problem.dictionary;
    let (n, p) = a.shape();
    if problem.target.len() != n {
        return Err(shape_err(format!(
            "target length {} but dictionary has {} rows",
            problem.target.len(),
            n
        )));
    }
    let mut excluded = vec![false; p];
    for &j in &problem.excluded {
        if j >= p {
            return Err(shape_err(format!("excluded column {} >= {}", j, p)));
        }
        excluded[j] = true;
    }
    let gram = column_gram(a);
    let at = a.transpose();
    let corr: Vec<f64> = (0..p).map(|j| dot(at.row(j), &problem.target)).collect();
    let target_sq = dot(&problem.target, &problem.target);
    let mut sol = solve_gram_lasso(
        &gram,
        &corr,
        target_sq,
        problem.lambda,
        &excluded,
        None,
        &problem.settings,
    )?;
    sol.objective = dense_objective(a, &problem.target, &sol.coeffs, problem.lambda);
    Ok(sol)
}

/// `½‖b − A s‖² + λ‖s‖₁` evaluated through the residual.
pub fn dense_objective(a: &DenseMatrix, b: &[f64], s: &[f64], lambda: f64) -> f64 {
    let fit = a.matvec(s).expect("caller checked shapes");
    let rss: f64 = b.iter().zip(&fit).map(|(b, f)| (b - f) * (b - f)).sum();
    0.5 * rss + lambda * s.iter().map(|v| v.abs()).sum::<f64>()
}

/// Representation of a batch of `k` arriving labels over `[past, new]`.
#[derive(Debug, Clone)]
pub struct BatchRepresentation {
    /// `(m + k) x k`; column `i` reconstructs new label `i`, entry `(m + i, i)` is zero.
    pub s_new: DenseMatrix,
    pub columns: Vec<LassoSolution>,
    pub n_past: usize,
}

impl BatchRepresentation {
    /// Past-label block `S⁽¹⁾` (`m x k`).
    pub fn past_block(&self) -> DenseMatrix {
        self.s_new.row_block(0, self.n_past)
    }

    /// New-label interaction block `S⁽²⁾` (`k x k`, zero diagonal).
    pub fn new_block(&self) -> DenseMatrix {
        self.s_new.row_block(self.n_past, self.s_new.rows())
    }

    /// Columns whose solve hit the sweep cap.
    pub fn not_converged(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.converged)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total_objective(&self) -> f64 {
        self.columns.iter().map(|c| c.objective).sum()
    }
}

/// Batch representation from the Gram matrix of `[past, new]` columns.
/// The last `k` columns of the dictionary are the targets, so their
/// correlations are Gram columns. Columns are solved in parallel.
pub fn solve_batch_representation_gram(
    gram: &DenseMatrix,
    n_new: usize,
    lambda: f64,
    settings: &LassoSettings,
) -> Result<BatchRepresentation> {
    let total = gram.rows();
    if gram.cols() != total || n_new == 0 || n_new > total {
        return Err(shape_err(format!(
            "gram {:?} with {} new labels",
            gram.shape(),
            n_new
        )));
    }
    let m = total - n_new;
    let columns = (0..n_new)
        .into_par_iter()
        .map(|i| {
            let t = m + i;
            let corr = gram.column(t);
            let mut excluded = vec![false; total];
            excluded[t] = true;
            solve_gram_lasso(gram, &corr, gram.get(t, t), lambda, &excluded, None, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s_new = DenseMatrix::zeros(total, n_new);
    for (i, col) in columns.iter().enumerate() {
        for (r, &v) in col.coeffs.iter().enumerate() {
            s_new.set(r, i, v);
        }
    }
    Ok(BatchRepresentation {
        s_new,
        columns,
        n_past: m,
    })
}

/// Batch representation from the dense dictionary `[Y*_m, Y*_new]` whose
/// last `n_new` columns are the arriving labels.
pub fn solve_batch_representation(
    dictionary: &DenseMatrix,
    n_new: usize,
    lambda: f64,
    settings: &LassoSettings,
) -> Result<BatchRepresentation> {
    let gram = column_gram(dictionary);
    let mut rep = solve_batch_representation_gram(&gram, n_new, lambda, settings)?;
    for (i, col) in rep.columns.iter_mut().enumerate() {
        let target = dictionary.column(rep.n_past + i);
        col.objective = dense_objective(dictionary, &target, &col.coeffs, lambda);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> LassoSettings {
        LassoSettings {
            tol: 1e-10,
            max_sweeps: 10_000,
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        let problem = LassoProblem {
            dictionary: DenseMatrix::identity(2),
            target: vec![1.0, 0.0],
            lambda: 0.1,
            excluded: vec![],
            settings: settings(),
        };
        let sol = solve_lasso(&problem).unwrap();
        assert!((sol.coeffs[0] - 0.9).abs() < 1e-12);
        assert_eq!(sol.coeffs[1], 0.0);
        assert!(sol.converged);
        assert!((sol.objective - (0.5 * 0.01 + 0.09)).abs() < 1e-12);
    }

    #[test]
    fn excluded_column_stays_zero() {
        let c0 = vec![1.0, 0.0, 0.0, 1.0];
        let c1 = vec![0.0, 1.0, 0.0, 1.0];
        let c2: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| a + b).collect();
        let problem = LassoProblem {
            dictionary: DenseMatrix::from_columns(&[c0, c1, c2.clone()]).unwrap(),
            target: c2,
            lambda: 1e-3,
            excluded: vec![2],
            settings: settings(),
        };
        let sol = solve_lasso(&problem).unwrap();
        assert_eq!(sol.coeffs[2].to_bits(), 0.0f64.to_bits());
        assert!(sol.coeffs[0] > 0.9 && sol.coeffs[1] > 0.9);
    }

    #[test]
    fn zero_column_is_harmless() {
        let problem = LassoProblem {
            dictionary: DenseMatrix::from_columns(&[vec![0.0; 3], vec![1.0, 1.0, 0.0]]).unwrap(),
            target: vec![1.0, 1.0, 1.0],
            lambda: 0.1,
            excluded: vec![],
            settings: settings(),
        };
        let sol = solve_lasso(&problem).unwrap();
        assert_eq!(sol.coeffs[0], 0.0);
        assert!((sol.coeffs[1] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.0]]).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let at = a.transpose();
        let lmax = (0..2).map(|j| dot(at.row(j), &b).abs()).fold(0.0, f64::max);
        let sol = solve_lasso(&LassoProblem {
            dictionary: a,
            target: b,
            lambda: lmax,
            excluded: vec![],
            settings: settings(),
        })
        .unwrap();
        assert_eq!(sol.coeffs, vec![0.0, 0.0]);
        assert_eq!(sol.sweeps_used, 0);
    }

    #[test]
    fn sweep_cap_flags_non_convergence() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.99], vec![0.99, 1.0], vec![0.1, 0.2]]).unwrap();
        let sol = solve_lasso(&LassoProblem {
            dictionary: a,
            target: vec![1.0, 2.0, 0.0],
            lambda: 1e-3,
            excluded: vec![],
            settings: LassoSettings {
                tol: 1e-14,
                max_sweeps: 0,
            },
        })
        .unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.sweeps_used, 0);
        assert!(matches!(sol.into_result(), Err(SllError::NotConverged { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        let base = LassoProblem {
            dictionary: DenseMatrix::identity(2),
            target: vec![1.0, 0.0],
            lambda: 0.1,
            excluded: vec![],
            settings: settings(),
        };
        let mut p = base.clone();
        p.lambda = 0.0;
        assert!(solve_lasso(&p).is_err());
        let mut p = base.clone();
        p.target = vec![1.0];
        assert!(solve_lasso(&p).is_err());
        let mut p = base.clone();
        p.excluded = vec![2];
        assert!(solve_lasso(&p).is_err());
        let mut p = base;
        p.settings.tol = 0.0;
        assert!(solve_lasso(&p).is_err());
    }

    #[test]
    fn batch_diagonal_is_zero() {
        let dict = DenseMatrix::from_columns(&[
            vec![1.0, -1.0, 1.0, -1.0],
            vec![1.0, 1.0, -1.0, -1.0],
            vec![1.0, -1.0, 1.0, 1.0],
            vec![1.0, -1.0, 1.0, 1.0],
        ])
        .unwrap();
        let rep = solve_batch_representation(&dict, 2, 0.01, &settings()).unwrap();
        let s2 = rep.new_block();
        assert_eq!(s2.get(0, 0), 0.0);
        assert_eq!(s2.get(1, 1), 0.0);
        // duplicate new labels reconstruct each other
        assert!(s2.get(1, 0) > 0.99 && s2.get(0, 1) > 0.99, "{:?}", s2);
        assert_eq!(rep.past_block().shape(), (2, 2));
    }
}
