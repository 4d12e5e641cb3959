//! Similarity-weighted group fairness for multi-label classification.
//!
//! The crate estimates Demographic Parity, Equalized Opportunity and their
//! similarity-weighted relaxation (`SimFair`) from finite samples, and trains
//! a sigmoid-output classifier with the relaxed violation as a penalty.
//!
//! Module map:
//! - [`similarity`]: label-space similarity kernels (constant, indicator, Jaccard-exponential)
//! - [`fairness`]: weighted group means, violations and their gradients
//! - [`model`]: the feedforward backbone, thresholding, BCE loss and backprop
//! - [`train`]: minibatch Adam training with the fairness penalty, and evaluation
//! - [`metrics`]: micro, macro and example F1
//! - [`data`]: CSV/manifest loading, splitting, label-group ranking, synthetic data

pub mod data;
pub mod error;
pub mod fairness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod similarity;
pub mod train;

pub use error::{Result, SimFairError};
pub use similarity::{LabelVector, SimilaritySpec};
