//! Test-adequacy scoring and fault-detection-rate prediction for dense
//! neural classifiers.
//!
//! The pipeline: score sampled training subsets with an adequacy metric,
//! cluster mispredicted training inputs into faults, regress FDR on the score,
//! then predict the FDR of an unlabeled test set with a prediction interval.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod adequacy;
pub mod assess;
pub mod error;
pub mod faults;
pub mod io;
pub mod linalg;
pub mod model;
pub mod mutation;
pub mod regression;
pub mod sampling;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use adequacy::{AdequacyScorer, Metric, MsVariant, SaKind, SubsetMode, SubsetRef};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{Activation, Layer, LabeledDataset, Model};
pub use scalar::Scalar;

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Dataset64 = model::LabeledDataset<f64>;
pub type Dataset32 = model::LabeledDataset<f32>;
pub type FaultClusters64 = faults::FaultClusters<f64>;
pub type FaultClusters32 = faults::FaultClusters<f32>;
