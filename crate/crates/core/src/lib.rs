//! Streaming label learning.
//!
//! Given a linear multi-label model `W` over `m` known labels, classifiers
//! for newly arriving labels are learned without retraining the old ones:
//! each new label's response vector is sparsely reconstructed from the
//! existing labels ([`lasso`]), and the same coefficients applied to the
//! existing classifiers give a prior that regularizes the new classifier
//! ([`solvers`]). [`engine`] runs the whole stream, [`evaluation`] scores it
//! and [`theory`] checks the approximation bound numerically.

pub mod data;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod lasso;
pub mod model;
pub mod solvers;
pub mod synthetic;
pub mod theory;

pub use error::{Result, SllError};
