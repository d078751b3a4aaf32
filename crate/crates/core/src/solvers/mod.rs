//! Ridge closed form, the batch objective with its gradient and
//! Hessian-vector product, and the Newton-CG trainer built on them.

mod batch;
mod cg;
mod loss;
mod ridge;

pub use batch::{train_batch_classifier, train_joint, BatchFit, BatchProblem, TrainOptions, SINGULAR_WARN};
pub use cg::{pcg, CgConfig, CgOutcome};
pub use loss::{LossModel, SquaredLoss};
pub use ridge::{ridge_update_single, RidgeFit, RidgeSystem, DIRECT_SOLVE_LIMIT};
