use log::warn;

use super::cg::{pcg, CgConfig};
use super::loss::LossModel;
use super::ridge::RidgeSystem;
use crate::data::{dot, DenseMatrix, FeatureMatrix};
use crate::error::{shape_err, Result, SllError};

/// Threshold below which `σ_min(I − S⁽²⁾)` is reported as singular.
pub const SINGULAR_WARN: f64 = 1e-10;

const MAX_NEWTON_STEPS: usize = 50;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

/// The objective over the classifiers of `k` new labels:
///
/// `J(W) = Σ ℓ(Y_ij, (XᵀW)_ij) + (β/2)‖W(I − S⁽²⁾) − W_m S⁽¹⁾‖²_F`.
pub struct BatchProblem<'a> {
    features: &'a FeatureMatrix,
    targets: &'a DenseMatrix,
    beta: f64,
    /// `I − S⁽²⁾`.
    coupling: DenseMatrix,
    /// `(I − S⁽²⁾)(I − S⁽²⁾)ᵀ`.
    coupling_gram: DenseMatrix,
    /// `W_m S⁽¹⁾`.
    anchor: DenseMatrix,
}

impl<'a> BatchProblem<'a> {
    /// `targets` is `n x k`, `past_coeffs` `m x k`, `new_coeffs` `k x k`,
    /// `past_weights` `d x m`.
    pub fn new(
        features: &'a FeatureMatrix,
        targets: &'a DenseMatrix,
        past_coeffs: &DenseMatrix,
        new_coeffs: &DenseMatrix,
        past_weights: &DenseMatrix,
        beta: f64,
    ) -> Result<Self> {
        let (n, k) = targets.shape();
        let d = features.dim();
        let m = past_weights.cols();
        if n != features.n_examples() {
            return Err(shape_err(format!("targets have {} rows, n = {}", n, features.n_examples())));
        }
        if new_coeffs.shape() != (k, k) {
            return Err(shape_err(format!("new-label block is {:?}, expected {}x{}", new_coeffs.shape(), k, k)));
        }
        if past_coeffs.shape() != (m, k) {
            return Err(shape_err(format!("past-label block is {:?}, expected {}x{}", past_coeffs.shape(), m, k)));
        }
        if past_weights.rows() != d {
            return Err(shape_err(format!("past weights have {} rows, d = {}", past_weights.rows(), d)));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(SllError::InvalidConfig(format!("beta must be >= 0, got {}", beta)));
        }
        let coupling = DenseMatrix::identity(k).sub(new_coeffs)?;
        let coupling_gram = coupling.matmul(&coupling.transpose())?;
        let anchor = past_weights.matmul(past_coeffs)?;
        Ok(BatchProblem {
            features,
            targets,
            beta,
            coupling,
            coupling_gram,
            anchor,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.targets.cols()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn features(&self) -> &FeatureMatrix {
        self.features
    }

    /// `W_m S⁽¹⁾`, the prior the new classifiers are pulled toward.
    pub fn anchor(&self) -> &DenseMatrix {
        &self.anchor
    }

    /// Smallest singular value of `I − S⁽²⁾`.
    pub fn coupling_sigma_min(&self) -> f64 {
        if self.coupling.rows() == 0 {
            return 1.0;
        }
        let sv = self.coupling.to_nalgebra().singular_values();
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_weights(&self, w: &DenseMatrix) -> Result<()> {
        let expected = (self.dim(), self.n_targets());
        if w.shape() != expected {
            return Err(shape_err(format!("weights are {:?}, expected {:?}", w.shape(), expected)));
        }
        Ok(())
    }

    fn structure_residual(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        w.matmul(&self.coupling)?.sub(&self.anchor)
    }

    pub fn objective<L: LossModel + ?Sized>(&self, w: &DenseMatrix, loss: &L) -> Result<f64> {
        self.check_weights(w)?;
        let t = self.features.project(w)?;
        let fit: f64 = self
            .targets
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(&y, &p)| loss.value(y, p))
            .sum();
        let reg = self.structure_residual(w)?.frobenius_sq();
        Ok(fit + 0.5 * self.beta * reg)
    }

    /// `X G + β [W(I − S⁽²⁾) − W_m S⁽¹⁾](I − S⁽²⁾)ᵀ` with `G_ij = ℓ′(Y_ij, (XᵀW)_ij)`.
    pub fn gradient<L: LossModel + ?Sized>(&self, w: &DenseMatrix, loss: &L) -> Result<DenseMatrix> {
        self.check_weights(w)?;
        let mut g = self.features.project(w)?;
        for (gv, &y) in g.as_mut_slice().iter_mut().zip(self.targets.as_slice()) {
            *gv = loss.d1(y, *gv);
        }
        let mut out = self.features.back_project(&g)?;
        if self.beta > 0.0 {
            let reg = self.structure_residual(w)?.matmul(&self.coupling.transpose())?;
            out.axpy(self.beta, &reg)?;
        }
        Ok(out)
    }

    /// `X H + β Z (I − S⁽²⁾)(I − S⁽²⁾)ᵀ` with `H_ij = ℓ″(Y_ij, (XᵀW)_ij) · x_iᵀz_j`.
    pub fn hvp<L: LossModel + ?Sized>(&self, w: &DenseMatrix, z: &DenseMatrix, loss: &L) -> Result<DenseMatrix> {
        self.check_weights(z)?;
        let curvature = self.curvature(w, loss)?;
        self.hvp_with(curvature.as_ref(), z)
    }

    /// Per-cell `ℓ″`; `None` when the loss is quadratic with unit curvature.
    fn curvature<L: LossModel + ?Sized>(&self, w: &DenseMatrix, loss: &L) -> Result<Option<DenseMatrix>> {
        self.check_weights(w)?;
        if loss.is_quadratic() && loss.d2(0.0, 0.0) == 1.0 {
            return Ok(None);
        }
        let mut t = self.features.project(w)?;
        for (tv, &y) in t.as_mut_slice().iter_mut().zip(self.targets.as_slice()) {
            *tv = loss.d2(y, *tv);
        }
        Ok(Some(t))
    }

    fn hvp_with(&self, curvature: Option<&DenseMatrix>, z: &DenseMatrix) -> Result<DenseMatrix> {
        let mut h = self.features.project(z)?;
        if let Some(c) = curvature {
            for (hv, cv) in h.as_mut_slice().iter_mut().zip(c.as_slice()) {
                *hv *= cv;
            }
        }
        let mut out = self.features.back_project(&h)?;
        if self.beta > 0.0 {
            out.axpy(self.beta, &z.matmul(&self.coupling_gram)?)?;
        }
        Ok(out)
    }

    /// Shift for the `(X Xᵀ + shift·I)` preconditioner: the smallest diagonal
    /// entry of `β (I − S⁽²⁾)(I − S⁽²⁾)ᵀ`, floored to keep it positive definite.
    pub fn preconditioner_shift(&self) -> f64 {
        let k = self.n_targets();
        let min_diag = (0..k).map(|j| self.coupling_gram.get(j, j)).fold(f64::INFINITY, f64::min);
        let shift = if k == 0 { 0.0 } else { self.beta * min_diag };
        if shift > 0.0 {
            return shift;
        }
        let d = self.dim().max(1) as f64;
        let trace: f64 = self.features.rows().iter().map(|r| r.squared_norm()).sum();
        (1e-8 * trace / d).max(1e-12)
    }
}

#[derive(Default)]
pub struct TrainOptions<'s, 'a> {
    pub warm_start: Option<&'s DenseMatrix>,
    /// A factorized `(X Xᵀ + βI)` on the same features, reused as the
    /// preconditioner instead of building one per call.
    pub preconditioner: Option<&'s RidgeSystem<'a>>,
}

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub weights: DenseMatrix,
    pub objective: f64,
    pub gradient_norm: f64,
    pub initial_gradient_norm: f64,
    /// `rel_tol · (1 + ‖∇J(0)‖)`.
    pub gradient_target: f64,
    pub newton_steps: usize,
    pub cg_iterations: usize,
    pub coupling_sigma_min: f64,
    pub converged: bool,
}

impl BatchFit {
    pub fn into_result(self) -> Result<BatchFit> {
        if self.converged {
            Ok(self)
        } else {
            Err(SllError::NotConverged {
                what: "batch classifier".into(),
                detail: format!(
                    "gradient norm {:e} above target {:e} after {} Newton steps",
                    self.gradient_norm, self.gradient_target, self.newton_steps
                ),
            })
        }
    }
}

fn as_matrix(rows: usize, cols: usize, v: Vec<f64>) -> DenseMatrix {
    DenseMatrix::from_vec_unchecked(rows, cols, v)
}

/// Minimizes the batch objective by truncated Newton with preconditioned CG.
/// For a quadratic loss a single inner solve is exact up to the CG tolerance.
pub fn train_batch_classifier<L: LossModel + ?Sized>(
    problem: &BatchProblem<'_>,
    loss: &L,
    cg: &CgConfig,
    options: TrainOptions<'_, '_>,
) -> Result<BatchFit> {
    let (d, k) = (problem.dim(), problem.n_targets());
    if !(cg.rel_tol > 0.0) {
        return Err(SllError::InvalidConfig(format!("CG rel_tol must be > 0, got {}", cg.rel_tol)));
    }
    let sigma = problem.coupling_sigma_min();
    if sigma < SINGULAR_WARN {
        warn!("I - S2 is near singular (sigma_min = {:e}); the batch objective is only semidefinite", sigma);
    }

    let zero = DenseMatrix::zeros(d, k);
    let g0 = problem.gradient(&zero, loss)?.frobenius_norm();
    let target = cg.rel_tol * (1.0 + g0);

    let owned;
    let precond: Option<&RidgeSystem<'_>> = match options.preconditioner {
        Some(p) => Some(p),
        None if d > 0 && k > 0 => {
            owned = RidgeSystem::new(problem.features(), problem.preconditioner_shift())?;
            owned.has_factor().then_some(&owned)
        }
        None => None,
    };

    let mut w = match options.warm_start {
        Some(ws) => {
            problem.check_weights(ws)?;
            ws.clone()
        }
        None => zero,
    };
    let mut obj = problem.objective(&w, loss)?;
    let mut grad = problem.gradient(&w, loss)?;
    let mut gnorm = grad.frobenius_norm();
    let mut steps = 0;
    let mut cg_iters = 0;
    let quadratic = loss.is_quadratic();

    while gnorm > target && steps < MAX_NEWTON_STEPS {
        steps += 1;
        let curvature = problem.curvature(&w, loss)?;
        let apply = |v: &[f64]| -> Vec<f64> {
            problem
                .hvp_with(curvature.as_ref(), &as_matrix(d, k, v.to_vec()))
                .expect("shapes fixed")
                .into_vec()
        };
        let pre = precond.map(|p| {
            move |r: &[f64]| -> Vec<f64> {
                p.solve_columns(&as_matrix(d, k, r.to_vec())).expect("factor present").into_vec()
            }
        });
        let rhs: Vec<f64> = grad.as_slice().iter().map(|g| -g).collect();
        let forcing = if quadratic { 0.5 * target } else { (0.5 * target).max(gnorm.sqrt().min(0.5) * gnorm) };
        let out = pcg(apply, pre, &rhs, vec![0.0; d * k], forcing, cg.iteration_cap(d * k));
        cg_iters += out.iterations;
        let dir = as_matrix(d, k, out.x);
        let slope = dot(grad.as_slice(), dir.as_slice());
        if !(slope < 0.0) {
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = w.clone();
            trial.axpy(t, &dir)?;
            let trial_obj = problem.objective(&trial, loss)?;
            if trial_obj <= obj + ARMIJO_C * t * slope {
                accepted = Some((trial, trial_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_obj)) = accepted else { break };
        let next_grad = problem.gradient(&next, loss)?;
        let next_norm = next_grad.frobenius_norm();
        w = next;
        obj = next_obj;
        grad = next_grad;
        gnorm = next_norm;
    }

    Ok(BatchFit {
        weights: w,
        objective: obj,
        gradient_norm: gnorm,
        initial_gradient_norm: g0,
        gradient_target: target,
        newton_steps: steps,
        cg_iterations: cg_iters,
        coupling_sigma_min: sigma,
        converged: gnorm <= target,
    })
}

/// Trains classifiers for every label at once under a fixed structure `S`:
/// `Σ ℓ(y, Xᵀw) + (λ/2)‖W − W S‖²_F`.
pub fn train_joint<L: LossModel + ?Sized>(
    features: &FeatureMatrix,
    targets: &DenseMatrix,
    structure: &DenseMatrix,
    lambda_struct: f64,
    loss: &L,
    cg: &CgConfig,
    options: TrainOptions<'_, '_>,
) -> Result<BatchFit> {
    let l = targets.cols();
    let past_coeffs = DenseMatrix::zeros(0, l);
    let past_weights = DenseMatrix::zeros(features.dim(), 0);
    let problem = BatchProblem::new(features, targets, &past_coeffs, structure, &past_weights, lambda_struct)?;
    train_batch_classifier(&problem, loss, cg, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::loss::SquaredLoss;
    use crate::solvers::ridge::ridge_update_single;

    fn small_features() -> FeatureMatrix {
        FeatureMatrix::from_dense_rows(
            &DenseMatrix::from_rows(&[
                vec![1.0, 0.0, 0.5],
                vec![0.0, 1.0, -1.0],
                vec![2.0, 1.0, 0.0],
                vec![0.0, 0.3, 1.0],
                vec![1.0, 1.0, 1.0],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_with_no_structure_give_minus_xy() {
        let x = small_features();
        let y = DenseMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        let empty = DenseMatrix::zeros(0, 1);
        let wm = DenseMatrix::zeros(3, 0);
        let s2 = DenseMatrix::zeros(1, 1);
        let p = BatchProblem::new(&x, &y, &empty, &s2, &wm, 0.0).unwrap();
        let g = p.gradient(&DenseMatrix::zeros(3, 1), &SquaredLoss).unwrap();
        let xy = x.back_project(&y).unwrap();
        assert!(g.max_abs_diff(&xy.scale(-1.0)) < 1e-14);
    }

    #[test]
    fn single_label_matches_ridge_update() {
        let x = small_features();
        let y = DenseMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        let wm = DenseMatrix::from_rows(&[vec![0.2, -0.1], vec![0.0, 0.4], vec![1.0, 0.3]]).unwrap();
        let s1 = DenseMatrix::from_rows(&[vec![0.7], vec![-0.2]]).unwrap();
        let s2 = DenseMatrix::zeros(1, 1);
        let cg = CgConfig::default();
        let p = BatchProblem::new(&x, &y, &s1, &s2, &wm, 0.8).unwrap();
        let fit = train_batch_classifier(&p, &SquaredLoss, &cg, TrainOptions::default()).unwrap();
        assert!(fit.converged);
        let prior = wm.matvec(&s1.column(0)).unwrap();
        let ridge = ridge_update_single(&x, &y.column(0), &prior, 0.8, &cg).unwrap();
        for (a, b) in fit.weights.column(0).iter().zip(&ridge.w) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_structure_gives_least_squares() {
        let x = small_features();
        let y = DenseMatrix::from_rows(&[
            vec![1.0, -1.0],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
        ])
        .unwrap();
        let fit = train_joint(&x, &y, &DenseMatrix::identity(2), 3.0, &SquaredLoss, &CgConfig::default(), TrainOptions::default())
            .unwrap();
        let ls = train_joint(&x, &y, &DenseMatrix::zeros(2, 2), 0.0, &SquaredLoss, &CgConfig::default(), TrainOptions::default())
            .unwrap();
        assert!(fit.weights.max_abs_diff(&ls.weights) < 1e-8);
    }

    #[test]
    fn shape_errors() {
        let x = small_features();
        let y = DenseMatrix::zeros(5, 2);
        let s2 = DenseMatrix::zeros(3, 3);
        assert!(BatchProblem::new(&x, &y, &DenseMatrix::zeros(0, 2), &s2, &DenseMatrix::zeros(3, 0), 1.0).is_err());
        let y_bad = DenseMatrix::zeros(4, 2);
        let s2 = DenseMatrix::zeros(2, 2);
        assert!(BatchProblem::new(&x, &y_bad, &DenseMatrix::zeros(0, 2), &s2, &DenseMatrix::zeros(3, 0), 1.0).is_err());
    }
}
