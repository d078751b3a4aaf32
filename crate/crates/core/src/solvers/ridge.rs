use nalgebra::{Cholesky, DMatrix, Dyn};

use super::cg::{pcg, CgConfig};
use crate::data::{norm2, DenseMatrix, FeatureMatrix};
use crate::error::{shape_err, Result, SllError};

/// Largest feature dimension for which `X Xᵀ + βI` is factorized densely.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;

/// The SPD system `(X Xᵀ + βI) w = rhs` shared by every single-label
/// classifier update on the same features.
pub struct RidgeSystem<'a> {
    features: &'a FeatureMatrix,
    beta: f64,
    factor: Option<Cholesky<f64, Dyn>>,
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub w: Vec<f64>,
    /// `‖(X Xᵀ + βI) w − rhs‖`.
    pub residual_norm: f64,
    pub rhs_norm: f64,
    pub cg_iterations: usize,
    pub direct: bool,
    pub converged: bool,
}

impl RidgeFit {
    pub fn into_result(self) -> Result<RidgeFit> {
        if self.converged {
            Ok(self)
        } else {
            Err(SllError::NotConverged {
                what: "ridge update".into(),
                detail: format!(
                    "residual {:e} for rhs norm {:e} after {} CG iterations",
                    self.residual_norm, self.rhs_norm, self.cg_iterations
                ),
            })
        }
    }
}

impl<'a> RidgeSystem<'a> {
    /// Factorizes densely when `d <= DIRECT_SOLVE_LIMIT` and `β > 0`;
    /// otherwise solves go through CG on `gram_apply`.
    pub fn new(features: &'a FeatureMatrix, beta: f64) -> Result<Self> {
        Self::with_direct(features, beta, features.dim() <= DIRECT_SOLVE_LIMIT)
    }

    pub fn with_direct(features: &'a FeatureMatrix, beta: f64, direct: bool) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(SllError::InvalidConfig(format!("beta must be >= 0, got {}", beta)));
        }
        let factor = if direct && beta > 0.0 {
            let mut g = features.dense_gram();
            for i in 0..g.rows() {
                g.set(i, i, g.get(i, i) + beta);
            }
            g.to_nalgebra().cholesky()
        } else {
            None
        };
        Ok(RidgeSystem {
            features,
            beta,
            factor,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn features(&self) -> &FeatureMatrix {
        self.features
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }

    /// `(X Xᵀ + βI) v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.features.gram_apply(v).expect("caller checked length");
        for (o, x) in out.iter_mut().zip(v) {
            *o += self.beta * x;
        }
        out
    }

    /// Applies the cached inverse to every column of a `d x k` matrix.
    pub fn solve_columns(&self, rhs: &DenseMatrix) -> Option<DenseMatrix> {
        let factor = self.factor.as_ref()?;
        let b = DMatrix::from_row_slice(rhs.rows(), rhs.cols(), rhs.as_slice());
        let x = factor.solve(&b);
        let mut out = DenseMatrix::zeros(rhs.rows(), rhs.cols());
        for i in 0..rhs.rows() {
            for j in 0..rhs.cols() {
                out.set(i, j, x[(i, j)]);
            }
        }
        Some(out)
    }

    fn solve_vec_direct(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let factor = self.factor.as_ref()?;
        let b = nalgebra::DVector::from_column_slice(rhs);
        Some(factor.solve(&b).as_slice().to_vec())
    }

    /// Solves to `‖residual‖ ≤ rel_tol · ‖rhs‖`. A direct solve whose
    /// residual misses the target is refined with CG.
    pub fn solve(&self, rhs: &[f64], cg: &CgConfig) -> Result<RidgeFit> {
        let d = self.features.dim();
        if rhs.len() != d {
            return Err(shape_err(format!("rhs length {} != d {}", rhs.len(), d)));
        }
        let rhs_norm = norm2(rhs);
        let tol = cg.rel_tol * rhs_norm;
        let (x0, direct) = match self.solve_vec_direct(rhs) {
            Some(x) => (x, true),
            None => (vec![0.0; d], false),
        };
        let precond = self.factor.as_ref().map(|_| |r: &[f64]| self.solve_vec_direct(r).unwrap());
        let out = pcg(|v| self.apply(v), precond, rhs, x0, tol, cg.iteration_cap(d));
        Ok(RidgeFit {
            w: out.x,
            residual_norm: out.residual_norm,
            rhs_norm,
            cg_iterations: out.iterations,
            direct,
            converged: out.converged,
        })
    }

    /// `argmin_w ½‖y − Xᵀw‖² + (β/2)‖w − prior‖²`.
    pub fn update_single(&self, y_new: &[f64], prior: &[f64], cg: &CgConfig) -> Result<RidgeFit> {
        let d = self.features.dim();
        if prior.len() != d {
            return Err(shape_err(format!("prior length {} != d {}", prior.len(), d)));
        }
        if y_new.len() != self.features.n_examples() {
            return Err(shape_err(format!(
                "label vector length {} != n {}",
                y_new.len(),
                self.features.n_examples()
            )));
        }
        let mut rhs = self.features.back_project_vec(y_new)?;
        for (r, p) in rhs.iter_mut().zip(prior) {
            *r += self.beta * p;
        }
        self.solve(&rhs, cg)
    }
}

/// Closed-form single-label classifier
/// `w = (X Xᵀ + βI)⁻¹ (X y_new + β · prior)`.
pub fn ridge_update_single(
    features: &FeatureMatrix,
    y_new: &[f64],
    prior: &[f64],
    beta: f64,
    cg: &CgConfig,
) -> Result<RidgeFit> {
    if !(beta > 0.0) {
        return Err(SllError::InvalidConfig(format!("beta must be > 0, got {}", beta)));
    }
    RidgeSystem::new(features, beta)?.update_single(y_new, prior, cg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_features() -> FeatureMatrix {
        FeatureMatrix::from_dense_rows(&DenseMatrix::identity(2)).unwrap()
    }

    #[test]
    fn identity_features_average_label_and_prior() {
        let x = identity_features();
        let fit = ridge_update_single(&x, &[1.0, -1.0], &[0.0, 2.0], 1.0, &CgConfig::default()).unwrap();
        assert!((fit.w[0] - 0.5).abs() < 1e-14 && (fit.w[1] - 0.5).abs() < 1e-14);
        assert!(fit.converged && fit.direct);
    }

    #[test]
    fn cg_path_matches_direct_path() {
        let x = FeatureMatrix::from_dense_rows(
            &DenseMatrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 2.0, -1.0], vec![1.0, 0.0, 3.0], vec![0.2, 0.2, 0.2]])
                .unwrap(),
        )
        .unwrap();
        let y = [1.0, -1.0, -1.0, 1.0];
        let prior = [0.1, -0.3, 0.7];
        let cg = CgConfig::default();
        let direct = RidgeSystem::with_direct(&x, 0.5, true).unwrap().update_single(&y, &prior, &cg).unwrap();
        let iterative = RidgeSystem::with_direct(&x, 0.5, false).unwrap().update_single(&y, &prior, &cg).unwrap();
        assert!(!iterative.direct && iterative.converged);
        for (a, b) in direct.w.iter().zip(&iterative.w) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn large_beta_returns_prior() {
        let x = identity_features();
        let prior = [0.3, -2.0];
        let fit = ridge_update_single(&x, &[1.0, -1.0], &prior, 1e8, &CgConfig::default()).unwrap();
        for (w, p) in fit.w.iter().zip(&prior) {
            assert!((w - p).abs() <= 1e-6 * p.abs());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = identity_features();
        let cg = CgConfig::default();
        assert!(ridge_update_single(&x, &[1.0, -1.0], &[0.0, 0.0], 0.0, &cg).is_err());
        assert!(ridge_update_single(&x, &[1.0], &[0.0, 0.0], 1.0, &cg).is_err());
        assert!(ridge_update_single(&x, &[1.0, -1.0], &[0.0], 1.0, &cg).is_err());
    }
}
