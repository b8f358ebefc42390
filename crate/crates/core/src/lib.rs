//! Model selection for pre-trained model zoos by graph learning.
//!
//! The pipeline turns a zoo (model cards, dataset cards, training history,
//! per-sample probe features, transferability scores) into a weighted graph
//! over model and dataset nodes, learns node embeddings on it, and trains a
//! regression predictor mapping `(model, dataset)` features to fine-tuning
//! accuracy. Quality is measured by leave-one-out Pearson correlation.
//!
//! Numeric kernels (correlation, evidence maximization, linear solves, tree
//! ensembles) are generic over [`Scalar`], implemented for `f32` and `f64`.
//! The pipeline itself runs on [`Real`] (`f64`).

pub mod embed;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod linalg;
pub mod predictor;
pub mod registry;
pub mod scalar;
pub mod simfeat;
pub mod synthzoo;
pub mod transferability;
pub mod zoograph;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the end-to-end pipeline.
pub type Real = f64;

/// Dense row-major matrix over [`Real`].
pub type Matrix = linalg::Matrix<Real>;
/// Evidence-maximization state over [`Real`].
pub type EvidenceState = transferability::EvidenceState<Real>;
/// Ridge regression model over [`Real`].
pub type RidgeModel = predictor::ridge::Ridge<Real>;
/// Random forest over [`Real`].
pub type ForestModel = predictor::forest::Forest<Real>;
/// Gradient-boosted trees over [`Real`].
pub type GbmModel = predictor::gbm::Gbm<Real>;
