//! Preconditioned conjugate gradients for symmetric positive (semi)definite
//! operators given as closures.

use crate::data::{dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Residual reduction target.
    pub rel_tol: f64,
    /// Iteration cap; `None` means `min(10 * dimension, 500)`.
    pub max_iters: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            rel_tol: 1e-8,
            max_iters: None,
        }
    }
}

impl CgConfig {
    pub fn iteration_cap(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or_else(|| (10 * dim).clamp(1, 500))
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual `‖b − A x‖` at return.
    pub residual_norm: f64,
    pub converged: bool,
}

const MAX_RESTARTS: usize = 3;

/// Solves `A x = b` from `x0` until `‖b − A x‖ ≤ abs_tol`.
///
/// The recursive residual is re-anchored against the true residual before
/// returning; a drifted recursion restarts the iteration.
pub fn pcg<A, P>(
    apply: A,
    precondition: Option<P>,
    b: &[f64],
    x0: Vec<f64>,
    abs_tol: f64,
    max_iters: usize,
) -> CgOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0;
    let mut iterations = 0;
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(b, a)| b - a).collect()
    };
    let mut r = residual(&x);
    let mut rnorm = norm2(&r);

    for _ in 0..=MAX_RESTARTS {
        if rnorm <= abs_tol || iterations >= max_iters {
            break;
        }
        let mut z = match &precondition {
            Some(p) => p(&r),
            None => r.clone(),
        };
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iters {
            let ap = apply(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) || !(rz > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            for (ri, api) in r.iter_mut().zip(&ap) {
                *ri -= alpha * api;
            }
            iterations += 1;
            if norm2(&r) <= abs_tol {
                break;
            }
            z = match &precondition {
                Some(p) => p(&r),
                None => r.clone(),
            };
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        r = residual(&x);
        rnorm = norm2(&r);
    }

    CgOutcome {
        x,
        iterations,
        residual_norm: rnorm,
        converged: rnorm <= abs_tol,
    }
}
