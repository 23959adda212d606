//! Ensemble training and uniformly weighted mixture prediction.
//!
//! An ensemble holds `M` networks trained independently on random batches of
//! the same standardized training set, each from its own seed
//! (`base_seed + member_index`). Predictions combine the members as a
//! uniform mixture: the returned mean is the average member mean and the
//! returned variance is the mixture variance, which exceeds the average
//! member variance whenever the members disagree.
//!
//! Members are trained in parallel; because every member owns its RNG
//! stream and optimizer state, the result is a deterministic function of
//! `(data, config)` regardless of scheduling.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    apply_scaler, fit_scaler, make_batch, DataError, RegressionData, ScalerStats,
    StandardizedSet,
};
use crate::nn::{
    backward, forward, init_params, GaussianPrediction, Head, LayerSpec, LossKind,
    NetworkOutput, NetworkParams, NnError,
};
use crate::optim::{adam_step, AdamState, OptimError};

/// On-disk format version for serialized ensembles.
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("member {member} diverged at iteration {iteration} (non-finite loss)")]
    Divergence { member: usize, iteration: usize },
    #[error("ensemble training failed; diverged members: {0:?}")]
    MembersDiverged(Vec<usize>),
    #[error("mixture variance is undefined for mean-only members")]
    MixtureVarianceUndefined,
    #[error("mean-only ensemble is missing its residual variance")]
    MissingResidualVariance,
    #[error("scaler was not fitted on a training split")]
    ScalerNotFromTrainSplit,
    #[error("ensemble file {path}: {message}")]
    File { path: String, message: String },
    #[error("unsupported ensemble format version {found}, expected {expected}")]
    FormatVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Training configuration. Defaults: 5 members, batch size 100, 20000
/// iterations, learning rate 0.1, NLL loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub m_members: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub loss: LossKind,
    pub base_seed: u64,
    pub layer_spec: LayerSpec,
}

impl EnsembleConfig {
    pub fn new(layer_spec: LayerSpec) -> Self {
        Self {
            m_members: 5,
            batch_size: 100,
            iterations: 20_000,
            lr: 0.1,
            loss: LossKind::Nll,
            base_seed: 0,
            layer_spec,
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        self.layer_spec.validate()?;
        if self.m_members == 0 {
            return Err(EnsembleError::InvalidConfig("m_members must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EnsembleError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(EnsembleError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EnsembleError::InvalidConfig(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.loss == LossKind::Nll && self.layer_spec.head != Head::Gaussian {
            return Err(EnsembleError::InvalidConfig(
                "nll loss requires a gaussian head".into(),
            ));
        }
        Ok(())
    }

    /// Seed of member `i`: `base_seed + i`.
    pub fn member_seed(&self, member_index: usize) -> u64 {
        self.base_seed.wrapping_add(member_index as u64)
    }
}

/// A trained ensemble plus everything needed to reproduce raw-unit
/// predictions: the config that produced it and the training-split scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<NetworkParams>,
    pub config: EnsembleConfig,
    pub scaler: ScalerStats,
    /// Constant predictive variance for mean-only (squared-error trained)
    /// ensembles: the population variance of the mixture mean's training
    /// residuals, in raw target units. `None` for Gaussian heads.
    pub residual_variance: Option<f64>,
}

/// Mixture prediction in raw target units, with per-member components in
/// member order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrediction {
    pub mu_star: f64,
    pub sigma2_star: f64,
    pub member_mus: Vec<f64>,
    pub member_sigma2s: Vec<f64>,
}

/// Result of training one member.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMember {
    pub params: NetworkParams,
    /// Mean batch loss per iteration.
    pub loss_trace: Vec<f64>,
    /// Set when the configured batch size exceeded the training-set size.
    pub clamped_batch_size: Option<usize>,
}

/// Result of training a whole ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub ensemble: Ensemble,
    /// Per-member loss traces, in member order.
    pub traces: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Trains member `member_index` on an already-standardized training set.
///
/// Initialization uses seed `base_seed + member_index`; batch sampling uses
/// an independent stream of the same ChaCha generator, so two calls with
/// identical arguments produce bitwise-identical parameters.
pub fn train_member(
    data: &StandardizedSet,
    config: &EnsembleConfig,
    member_index: usize,
) -> Result<TrainedMember, EnsembleError> {
    config.validate()?;
    if data.is_empty() {
        return Err(EnsembleError::EmptyTrainingSet);
    }
    if member_index >= config.m_members {
        return Err(EnsembleError::InvalidConfig(format!(
            "member index {member_index} out of range for {} members",
            config.m_members
        )));
    }

    let seed = config.member_seed(member_index);
    let mut params = init_params(&config.layer_spec, seed)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(1); // stream 0 is reserved for initialization

    let n = data.len();
    let batch_size = config.batch_size.min(n);
    let clamped_batch_size = (batch_size != config.batch_size).then_some(batch_size);

    let mut state = AdamState::new(&params, config.lr);
    let mut loss_trace = Vec::with_capacity(config.iterations);
    let mut batch: Vec<(&[f64], f64)> = Vec::with_capacity(batch_size);

    for iteration in 0..config.iterations {
        batch.clear();
        for idx in make_batch(n, batch_size, &mut batch_rng) {
            batch.push((&data.xs[idx][..], data.ys[idx]));
        }
        // A blown-up network can surface either as a non-finite loss or as a
        // NaN predicted variance inside the loss; both mean divergence.
        let (loss, grads) = match backward(&params, &batch, config.loss) {
            Ok(v) => v,
            Err(NnError::NonPositiveVariance(v)) if !v.is_finite() => {
                return Err(EnsembleError::Divergence {
                    member: member_index,
                    iteration,
                })
            }
            Err(e) => return Err(e.into()),
        };
        if !loss.is_finite() {
            return Err(EnsembleError::Divergence {
                member: member_index,
                iteration,
            });
        }
        loss_trace.push(loss);
        match adam_step(&mut state, &mut params, &grads) {
            Ok(()) => {}
            Err(OptimError::NonFiniteGradient) => {
                return Err(EnsembleError::Divergence {
                    member: member_index,
                    iteration,
                })
            }
            Err(e) => return Err(e.into()),
        }
    }

    Ok(TrainedMember {
        params,
        loss_trace,
        clamped_batch_size,
    })
}

/// Trains all members (in parallel) on a raw-unit training set, fitting the
/// standardizer on that set first. Deterministic regardless of scheduling.
pub fn train_ensemble(
    train: &RegressionData,
    config: &EnsembleConfig,
) -> Result<TrainOutcome, EnsembleError> {
    config.validate()?;
    if train.is_empty() {
        return Err(EnsembleError::EmptyTrainingSet);
    }
    if train.input_dim() != config.layer_spec.input_dim {
        return Err(EnsembleError::InvalidConfig(format!(
            "layer spec expects {} inputs but the data has {} features",
            config.layer_spec.input_dim,
            train.input_dim()
        )));
    }

    let scaler = fit_scaler(train)?;
    if !scaler.fitted_on_train {
        return Err(EnsembleError::ScalerNotFromTrainSplit);
    }
    let std_set = apply_scaler(&scaler, train)?;

    let results: Vec<Result<TrainedMember, EnsembleError>> = (0..config.m_members)
        .into_par_iter()
        .map(|i| train_member(&std_set, config, i))
        .collect();

    let mut diverged = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if let Err(EnsembleError::Divergence { .. }) = r {
            diverged.push(i);
        }
    }
    if !diverged.is_empty() {
        return Err(EnsembleError::MembersDiverged(diverged));
    }

    let mut members = Vec::with_capacity(config.m_members);
    let mut traces = Vec::with_capacity(config.m_members);
    let mut warnings = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let trained = r?;
        if let (0, Some(clamped)) = (i, trained.clamped_batch_size) {
            warnings.push(format!(
                "batch_size {} clamped to training-set size {}",
                config.batch_size, clamped
            ));
        }
        members.push(trained.params);
        traces.push(trained.loss_trace);
    }

    let mut ensemble = Ensemble {
        members,
        config: config.clone(),
        scaler,
        residual_variance: None,
    };
    if config.layer_spec.head == Head::MeanOnly {
        ensemble.residual_variance = Some(training_residual_variance(&ensemble, train)?);
    }

    Ok(TrainOutcome {
        ensemble,
        traces,
        warnings,
    })
}

/// Population variance of the mixture mean's residuals on the training set,
/// in raw units. Floored at 1e-12 so a perfect fit still yields a usable
/// Gaussian.
fn training_residual_variance(
    ensemble: &Ensemble,
    train: &RegressionData,
) -> Result<f64, EnsembleError> {
    let mut residuals = Vec::with_capacity(train.len());
    for (x, &y) in train.xs.iter().zip(&train.ys) {
        let mu = member_raw_outputs(ensemble, x)?
            .iter()
            .map(|o| o.mu)
            .sum::<f64>()
            / ensemble.members.len() as f64;
        residuals.push(y - mu);
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(var.max(1e-12))
}

/// Mean and variance of a uniform mixture of Gaussian components:
/// `mu* = mean(mu_m)` and `sigma*^2 = mean(sigma_m^2 + mu_m^2) - mu*^2`,
/// evaluated in the cancellation-free form
/// `mean(sigma_m^2) + mean((mu_m - mu*)^2)`.
pub fn mixture_moments(mus: &[f64], sigma2s: &[f64]) -> (f64, f64) {
    assert_eq!(mus.len(), sigma2s.len());
    assert!(!mus.is_empty());
    let m = mus.len() as f64;
    let mu_star = mus.iter().sum::<f64>() / m;
    let avg_sigma2 = sigma2s.iter().sum::<f64>() / m;
    let mu_spread = mus.iter().map(|mu| (mu - mu_star) * (mu - mu_star)).sum::<f64>() / m;
    (mu_star, avg_sigma2 + mu_spread)
}

/// Forward pass of every member at one raw-unit input, with outputs mapped
/// back to raw units.
fn member_raw_outputs(
    ensemble: &Ensemble,
    x: &[f64],
) -> Result<Vec<NetworkOutput>, EnsembleError> {
    let z = ensemble.scaler.apply_features(x);
    ensemble
        .members
        .iter()
        .map(|net| {
            let out = forward(net, &z)?;
            Ok(NetworkOutput {
                mu: ensemble.scaler.invert_target(out.mu),
                sigma2: out.sigma2.map(|s2| ensemble.scaler.invert_target_variance(s2)),
            })
        })
        .collect()
}

/// Uniform-mixture prediction at a raw-unit input. Requires Gaussian heads;
/// the mixture variance is undefined for mean-only members.
pub fn predict_mixture(
    ensemble: &Ensemble,
    x: &[f64],
) -> Result<MixturePrediction, EnsembleError> {
    if ensemble.config.layer_spec.head != Head::Gaussian {
        return Err(EnsembleError::MixtureVarianceUndefined);
    }
    let outputs = member_raw_outputs(ensemble, x)?;
    let member_mus: Vec<f64> = outputs.iter().map(|o| o.mu).collect();
    let member_sigma2s: Vec<f64> = outputs
        .iter()
        .map(|o| o.sigma2.ok_or(EnsembleError::MixtureVarianceUndefined))
        .collect::<Result<_, _>>()?;
    let (mu_star, sigma2_star) = mixture_moments(&member_mus, &member_sigma2s);
    Ok(MixturePrediction {
        mu_star,
        sigma2_star,
        member_mus,
        member_sigma2s,
    })
}

/// Forward pass of one member network with scaler handling; raw units.
pub fn predict_single(
    net: &NetworkParams,
    scaler: &ScalerStats,
    x: &[f64],
) -> Result<NetworkOutput, EnsembleError> {
    let out = forward(net, &scaler.apply_features(x))?;
    Ok(NetworkOutput {
        mu: scaler.invert_target(out.mu),
        sigma2: out.sigma2.map(|s2| scaler.invert_target_variance(s2)),
    })
}

/// Single-member Gaussian prediction in raw units (the single-network
/// baseline).
pub fn predict_single_gaussian(
    net: &NetworkParams,
    scaler: &ScalerStats,
    x: &[f64],
) -> Result<GaussianPrediction, EnsembleError> {
    Ok(predict_single(net, scaler, x)?.gaussian()?)
}

impl Ensemble {
    /// Predictive mean and variance for either head kind: the Gaussian
    /// mixture moments, or the member-mean plus the constant training
    /// residual variance for mean-only ensembles.
    pub fn predict_mean_variance(&self, x: &[f64]) -> Result<(f64, f64), EnsembleError> {
        match self.config.layer_spec.head {
            Head::Gaussian => {
                let p = predict_mixture(self, x)?;
                Ok((p.mu_star, p.sigma2_star))
            }
            Head::MeanOnly => {
                let sigma2 = self
                    .residual_variance
                    .ok_or(EnsembleError::MissingResidualVariance)?;
                let outputs = member_raw_outputs(self, x)?;
                let mu = outputs.iter().map(|o| o.mu).sum::<f64>() / outputs.len() as f64;
                Ok((mu, sigma2))
            }
        }
    }

    /// Structural invariants: consistent member shapes and the seed contract
    /// `member[i].seed == base_seed + i`.
    pub fn audit(&self) -> Result<(), EnsembleError> {
        if self.members.len() != self.config.m_members {
            return Err(EnsembleError::InvalidConfig(format!(
                "config says {} members, found {}",
                self.config.m_members,
                self.members.len()
            )));
        }
        for (i, member) in self.members.iter().enumerate() {
            member.audit_shapes()?;
            if member.spec != self.config.layer_spec {
                return Err(EnsembleError::InvalidConfig(format!(
                    "member {i} has a different layer spec"
                )));
            }
            if member.seed != self.config.member_seed(i) {
                return Err(EnsembleError::InvalidConfig(format!(
                    "member {i} seed {} violates the base_seed + index contract",
                    member.seed
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleFile {
    format_version: u32,
    ensemble: Ensemble,
}

/// Writes a versioned JSON snapshot. All floats use shortest round-trip
/// formatting, so `load_ensemble(save_ensemble(e)) == e` bitwise.
pub fn save_ensemble(path: &Path, ensemble: &Ensemble) -> Result<(), EnsembleError> {
    let file = EnsembleFile {
        format_version: ENSEMBLE_FORMAT_VERSION,
        ensemble: ensemble.clone(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| EnsembleError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, json).map_err(|e| EnsembleError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_ensemble(path: &Path) -> Result<Ensemble, EnsembleError> {
    let text = std::fs::read_to_string(path).map_err(|e| EnsembleError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file: EnsembleFile = serde_json::from_str(&text).map_err(|e| EnsembleError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if file.format_version != ENSEMBLE_FORMAT_VERSION {
        return Err(EnsembleError::FormatVersion {
            found: file.format_version,
            expected: ENSEMBLE_FORMAT_VERSION,
        });
    }
    file.ensemble.audit()?;
    Ok(file.ensemble)
}
