//! Numeric containers and the label-space view of a dataset.

mod dataset;
mod dense;
mod features;
mod sparse;

pub use dataset::{materialize_label_columns, LabelView, SparseDataset};
pub use dense::{dot, norm2, DenseMatrix};
pub use features::FeatureMatrix;
pub use sparse::SparseVector;
