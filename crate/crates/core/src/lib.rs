//! Certified, distribution-free upper bounds on the L1 expected calibration
//! error `E_s |s - eta(s)|` of a binary classifier, computed from finite
//! `(score, label)` samples.
//!
//! Three certifiers are provided:
//!
//! * [`tv`]: assumes the calibration function has bounded total variation and
//!   builds a piecewise-constant surrogate by exact 1-D total-variation
//!   denoising.
//! * [`nw`]: assumes bounded first and second derivatives (guaranteed by the
//!   hyperbolic-secant score perturbation in [`nw::sech`]) and builds a
//!   tempered Epanechnikov Nadaraya-Watson surrogate.
//! * [`bucketing`]: a Lipschitz bucketing baseline with shift aggregation,
//!   plus the uncertified binned ECE heuristic.
//!
//! [`crossfit`] runs any certifier under K-fold cross-fitting and [`synth`]
//! provides synthetic calibration functions with a quadrature ground truth
//! for benchmarking.

pub mod bucketing;
pub mod cli;
pub mod concentration;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod nw;
pub mod report;
mod rng;
pub mod synth;
pub mod tv;

pub use data::{load_dataset, make_split_plan, subsample_validation, DeltaBudget, ScoredDataset, SplitPlan};
pub use error::{Error, Result};
pub use report::{BoundReport, Method};
