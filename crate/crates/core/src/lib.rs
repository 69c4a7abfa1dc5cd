//! Oracle-efficient differentially private learning with public unlabeled data.
//!
//! Learners reach the function class only through an ERM oracle
//! ([`oracle::erm`]) over composite objectives. The [`audit`] module checks
//! stability, privacy and accuracy guarantees by exact computation or Monte
//! Carlo at small scale.

pub mod audit;
pub mod dists;
pub mod domain;
mod error;
pub mod learners;
pub mod mech;
pub mod oracle;
pub mod seed;
pub mod stats;

pub use domain::{
    anchor_augment, empirical_distance, empirical_norm, evaluate_on, gp_functional, ClassKind, FeaturePoint,
    FunctionClassDesc, GpPath, LabeledDataset, OutputRange, Predictor, PublicSample, Task,
};
pub use error::{Error, Result};
