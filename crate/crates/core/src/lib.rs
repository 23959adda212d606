//! Uncertainty-aware regression for battery state of charge.
//!
//! The crate trains ensembles of small dense networks whose Gaussian output
//! head predicts both a mean and a variance, using the negative
//! log-likelihood as the training criterion. Member predictions are combined
//! as a uniformly weighted mixture, which yields a predictive mean and a
//! variance that grows with member disagreement.
//!
//! Subsystems:
//! - [`nn`]: networks, losses, exact backprop, finite-difference checking
//! - [`optim`]: Adam updates and learning-rate grid search
//! - [`ensemble`]: member training, mixture combination, serialization
//! - [`data`]: telemetry CSV ingestion, standardization, splits, generators
//! - [`eval`]: NLL/RMSE/coverage metrics, repeated-run reports, plot series
//!
//! Everything is deterministic under explicit seeds: training the same
//! configuration twice produces bitwise-identical parameters regardless of
//! worker scheduling.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;

pub use error::{Error, Result};
