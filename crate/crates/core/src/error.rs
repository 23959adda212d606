//! Crate-wide error type.
//!
//! Each subsystem defines its own error enum; this module folds them into a
//! single `Error` whose `Display` output is qualified with the subsystem name
//! so CLI messages always say where a failure came from.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("nn: {0}")]
    Nn(#[from] crate::nn::NnError),
    #[error("optim: {0}")]
    Optim(#[from] crate::optim::OptimError),
    #[error("data: {0}")]
    Data(#[from] crate::data::DataError),
    #[error("ensemble: {0}")]
    Ensemble(#[from] crate::ensemble::EnsembleError),
    #[error("eval: {0}")]
    Eval(#[from] crate::eval::EvalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
