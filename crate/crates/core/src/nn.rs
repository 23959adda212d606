//! Dense feed-forward networks with a Gaussian output head.
//!
//! A network maps a feature vector to either a predicted mean alone or to a
//! (mean, variance) pair. The variance is produced by passing the second
//! output unit through a softplus transform with a small positive floor, so
//! predicted variances are always strictly positive.
//!
//! Two training criteria are provided: the summed squared error and the
//! Gaussian negative log-likelihood
//!
//! ```text
//! nll(mu, s2, y) = log(s2)/2 + (y - mu)^2 / (2 s2) + log(2 pi)/2
//! ```
//!
//! Gradients are computed by exact reverse-mode differentiation of the mean
//! batch loss; `grad_check` verifies them against central finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive floor applied by [`variance_transform`], keeping variances
/// strictly positive even when softplus underflows.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// `log(2 pi) / 2`, the additive constant of the Gaussian log-density.
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("input length {got} does not match input_dim {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input value at position {0}")]
    NonFiniteInput(usize),
    #[error("predicted variance must be > 0, got {0}")]
    NonPositiveVariance(f64),
    #[error("prediction has no variance (mean-only head)")]
    MissingVariance,
    #[error("length mismatch: {mus} predictions vs {ys} targets")]
    LengthMismatch { mus: usize, ys: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("nll loss requires a gaussian head")]
    NllRequiresGaussianHead,
    #[error("finite-difference step must be in (0, 1e-2], got {0}")]
    InvalidStep(f64),
    #[error("parameter shapes are inconsistent with the layer spec: {0}")]
    ShapeAudit(String),
}

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Output head: a two-unit Gaussian head (mean and raw variance) or a single
/// mean unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Gaussian,
    MeanOnly,
}

impl Head {
    #[inline]
    pub fn output_units(self) -> usize {
        match self {
            Head::Gaussian => 2,
            Head::MeanOnly => 1,
        }
    }
}

/// Architecture of one network: input width, hidden widths, activation, head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl LayerSpec {
    /// Default architecture: one hidden layer of 50 ReLU units and a
    /// Gaussian head.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![50],
            activation: Activation::Relu,
            head: Head::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidSpec("input_dim must be >= 1".into()));
        }
        if let Some(pos) = self.hidden_dims.iter().position(|&d| d == 0) {
            return Err(NnError::InvalidSpec(format!(
                "hidden layer {pos} has zero units"
            )));
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` of every dense layer, output layer included.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.head.output_units()));
        dims
    }

    /// Total number of scalar parameters (weights plus biases).
    pub fn n_params(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum()
    }
}

/// Weights and biases of one network. Weight matrices are stored flat in
/// row-major `(out_dim, in_dim)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub spec: LayerSpec,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Seed the parameters were initialized from.
    pub seed: u64,
}

impl NetworkParams {
    /// All-zero parameters for the given spec. Mostly useful in tests and as
    /// a shape template.
    pub fn zeros(spec: &LayerSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let dims = spec.layer_dims();
        Ok(Self {
            spec: spec.clone(),
            weights: dims.iter().map(|&(i, o)| vec![0.0; i * o]).collect(),
            biases: dims.iter().map(|&(_, o)| vec![0.0; o]).collect(),
            seed: 0,
        })
    }

    /// Checks that every weight/bias buffer has the shape the spec implies
    /// and that all values are finite.
    pub fn audit_shapes(&self) -> Result<(), NnError> {
        self.spec.validate()?;
        let dims = self.spec.layer_dims();
        if self.weights.len() != dims.len() || self.biases.len() != dims.len() {
            return Err(NnError::ShapeAudit(format!(
                "expected {} layers, found {} weight and {} bias buffers",
                dims.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, &(i, o)) in dims.iter().enumerate() {
            if self.weights[l].len() != i * o {
                return Err(NnError::ShapeAudit(format!(
                    "layer {l}: weight buffer has {} entries, expected {}x{}",
                    self.weights[l].len(),
                    o,
                    i
                )));
            }
            if self.biases[l].len() != o {
                return Err(NnError::ShapeAudit(format!(
                    "layer {l}: bias buffer has {} entries, expected {o}",
                    self.biases[l].len()
                )));
            }
            if !self.weights[l].iter().chain(&self.biases[l]).all(|v| v.is_finite()) {
                return Err(NnError::ShapeAudit(format!(
                    "layer {l}: non-finite parameter value"
                )));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }
}

/// Mean/variance pair in target units. `sigma2` is strictly positive for any
/// value produced by [`variance_transform`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mu: f64,
    pub sigma2: f64,
}

/// Raw network output: a mean, plus a variance when the head is Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkOutput {
    pub mu: f64,
    pub sigma2: Option<f64>,
}

impl NetworkOutput {
    pub fn gaussian(&self) -> Result<GaussianPrediction, NnError> {
        match self.sigma2 {
            Some(sigma2) => Ok(GaussianPrediction { mu: self.mu, sigma2 }),
            None => Err(NnError::MissingVariance),
        }
    }
}

/// Partial derivatives of a scalar loss, shaped exactly like the
/// [`NetworkParams`] they differentiate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn shape_matches(&self, params: &NetworkParams) -> bool {
        self.weights.len() == params.weights.len()
            && self.biases.len() == params.biases.len()
            && self
                .weights
                .iter()
                .zip(&params.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&params.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|buf| buf.iter().all(|v| v.is_finite()))
    }
}

/// Training criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Nll,
    Mse,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Nll => write!(f, "nll"),
            LossKind::Mse => write!(f, "mse"),
        }
    }
}

/// Numerically stable `log(1 + exp(t))`.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Inverse of softplus: `log(exp(y) - 1)`. Used to pick the raw-variance bias
/// so a fresh network starts with predicted variance near a chosen value.
pub fn softplus_inverse(y: f64) -> f64 {
    y.exp_m1().ln()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Maps a raw head output to a strictly positive variance:
/// `softplus(raw) + 1e-6`. Monotone increasing and stable for large `|raw|`.
pub fn variance_transform(raw: f64) -> f64 {
    softplus(raw) + VARIANCE_FLOOR
}

/// Derivative of [`variance_transform`] with respect to `raw`.
#[inline]
fn variance_transform_grad(raw: f64) -> f64 {
    sigmoid(raw)
}

/// Deterministically initializes parameters from `(spec, seed)`.
///
/// Weights are uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; biases are
/// zero except the raw-variance unit of a Gaussian head, which starts at
/// `softplus_inverse(1)` so the initial predicted variance is close to 1 in
/// standardized target units.
pub fn init_params(spec: &LayerSpec, seed: u64) -> Result<NetworkParams, NnError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.layer_dims();
    let mut weights = Vec::with_capacity(dims.len());
    let mut biases = Vec::with_capacity(dims.len());
    for &(in_dim, out_dim) in &dims {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let w: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        weights.push(w);
        biases.push(vec![0.0; out_dim]);
    }
    if spec.head == Head::Gaussian {
        let last = biases.last_mut().expect("at least one layer");
        last[1] = softplus_inverse(1.0);
    }
    Ok(NetworkParams {
        spec: spec.clone(),
        weights,
        biases,
        seed,
    })
}

/// Per-layer intermediate values kept for the backward pass.
struct ForwardTrace {
    /// `acts[0]` is the input; `acts[l+1]` is the activation output of hidden
    /// layer `l`. The raw output-layer values live in `out`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Raw output-layer values (length 1 or 2).
    out: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], input: &[f64]) -> Vec<f64> {
    let in_dim = input.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>() + bias
        })
        .collect()
}

fn forward_trace(net: &NetworkParams, x: &[f64]) -> Result<ForwardTrace, NnError> {
    if x.len() != net.spec.input_dim {
        return Err(NnError::DimensionMismatch {
            expected: net.spec.input_dim,
            got: x.len(),
        });
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput(pos));
    }

    let n_hidden = net.spec.hidden_dims.len();
    let mut acts = Vec::with_capacity(n_hidden + 1);
    let mut pre = Vec::with_capacity(n_hidden);
    acts.push(x.to_vec());
    for l in 0..n_hidden {
        let z = affine(&net.weights[l], &net.biases[l], &acts[l]);
        let a = z.iter().map(|&v| net.spec.activation.apply(v)).collect();
        pre.push(z);
        acts.push(a);
    }
    let out = affine(
        &net.weights[n_hidden],
        &net.biases[n_hidden],
        &acts[n_hidden],
    );
    Ok(ForwardTrace { acts, pre, out })
}

/// Evaluates the network on one input.
///
/// For a Gaussian head the second output unit is mapped through
/// [`variance_transform`]; a mean-only head yields `sigma2 = None`.
pub fn forward(net: &NetworkParams, x: &[f64]) -> Result<NetworkOutput, NnError> {
    let trace = forward_trace(net, x)?;
    let sigma2 = match net.spec.head {
        Head::Gaussian => Some(variance_transform(trace.out[1])),
        Head::MeanOnly => None,
    };
    Ok(NetworkOutput {
        mu: trace.out[0],
        sigma2,
    })
}

/// Gaussian negative log-likelihood of a single observation:
/// `log(s2)/2 + (y - mu)^2 / (2 s2) + log(2 pi)/2`.
pub fn nll_loss(pred: &GaussianPrediction, y: f64) -> Result<f64, NnError> {
    if !(pred.sigma2 > 0.0) {
        return Err(NnError::NonPositiveVariance(pred.sigma2));
    }
    let r = y - pred.mu;
    Ok(0.5 * pred.sigma2.ln() + r * r / (2.0 * pred.sigma2) + HALF_LN_TWO_PI)
}

/// Summed squared error over paired predictions and targets.
///
/// This is deliberately a sum, not a mean; the training loop divides by the
/// batch size and the RMSE metric normalizes separately.
pub fn mse_loss(mus: &[f64], ys: &[f64]) -> Result<f64, NnError> {
    if mus.len() != ys.len() {
        return Err(NnError::LengthMismatch {
            mus: mus.len(),
            ys: ys.len(),
        });
    }
    if mus.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    Ok(mus
        .iter()
        .zip(ys)
        .map(|(m, y)| {
            let r = y - m;
            r * r
        })
        .sum())
}

/// Mean per-sample loss of `net` over a batch, computed by plain forward
/// passes. This is the quantity [`backward`] differentiates.
pub fn batch_loss(
    net: &NetworkParams,
    batch: &[(&[f64], f64)],
    loss: LossKind,
) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if loss == LossKind::Nll && net.spec.head != Head::Gaussian {
        return Err(NnError::NllRequiresGaussianHead);
    }
    let mut total = 0.0;
    for &(x, y) in batch {
        let out = forward(net, x)?;
        total += match loss {
            LossKind::Nll => nll_loss(&out.gaussian()?, y)?,
            LossKind::Mse => {
                let r = y - out.mu;
                r * r
            }
        };
    }
    Ok(total / batch.len() as f64)
}

/// Exact reverse-mode gradients of the mean batch loss.
///
/// Returns the loss value together with per-parameter partial derivatives.
/// The loss equals what [`batch_loss`] computes on the same batch.
pub fn backward(
    net: &NetworkParams,
    batch: &[(&[f64], f64)],
    loss: LossKind,
) -> Result<(f64, GradientSet), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if loss == LossKind::Nll && net.spec.head != Head::Gaussian {
        return Err(NnError::NllRequiresGaussianHead);
    }

    let n_hidden = net.spec.hidden_dims.len();
    let inv_n = 1.0 / batch.len() as f64;
    let mut grads = GradientSet::zeros_like(net);
    let mut total_loss = 0.0;

    for &(x, y) in batch {
        let trace = forward_trace(net, x)?;
        let mu = trace.out[0];

        // Gradient of this sample's contribution with respect to the raw
        // output units, already scaled by 1/N.
        let mut d_out = vec![0.0; trace.out.len()];
        match loss {
            LossKind::Nll => {
                let raw = trace.out[1];
                let sigma2 = variance_transform(raw);
                let pred = GaussianPrediction { mu, sigma2 };
                total_loss += nll_loss(&pred, y)?;
                let r = y - mu;
                d_out[0] = inv_n * (mu - y) / sigma2;
                let d_sigma2 = 0.5 / sigma2 - r * r / (2.0 * sigma2 * sigma2);
                d_out[1] = inv_n * d_sigma2 * variance_transform_grad(raw);
            }
            LossKind::Mse => {
                let r = y - mu;
                total_loss += r * r;
                d_out[0] = inv_n * 2.0 * (mu - y);
            }
        }

        // Output layer, then hidden layers in reverse.
        let mut d_act = backprop_layer(
            &net.weights[n_hidden],
            &trace.acts[n_hidden],
            &d_out,
            &mut grads.weights[n_hidden],
            &mut grads.biases[n_hidden],
        );
        for l in (0..n_hidden).rev() {
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(&trace.pre[l])
                .map(|(&da, &z)| da * net.spec.activation.grad(z))
                .collect();
            d_act = backprop_layer(
                &net.weights[l],
                &trace.acts[l],
                &d_pre,
                &mut grads.weights[l],
                &mut grads.biases[l],
            );
        }
    }

    Ok((total_loss * inv_n, grads))
}

/// Accumulates `dL/dW` and `dL/db` for one dense layer and returns `dL/d(input)`.
fn backprop_layer(
    w: &[f64],
    input: &[f64],
    d_out: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let in_dim = input.len();
    let mut d_input = vec![0.0; in_dim];
    for (o, &g) in d_out.iter().enumerate() {
        db[o] += g;
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let drow = &mut dw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            drow[i] += g * input[i];
            d_input[i] += g * row[i];
        }
    }
    d_input
}

/// Location of one scalar parameter inside a [`NetworkParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// The worst-agreeing parameter found by a gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstEntry {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of comparing analytic gradients against central finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tol: f64,
    pub pass: bool,
    pub worst: Option<WorstEntry>,
}

fn param_slot(
    p: &mut NetworkParams,
    kind: ParamKind,
    layer: usize,
    index: usize,
) -> &mut f64 {
    match kind {
        ParamKind::Weight => &mut p.weights[layer][index],
        ParamKind::Bias => &mut p.biases[layer][index],
    }
}

/// Relative error guarded against tiny denominators: `|a - n|` is measured
/// against `max(1, |a|, |n|)`.
fn guarded_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Runs [`backward`] and verifies the result against central finite
/// differences of [`batch_loss`], one parameter at a time.
pub fn grad_check(
    net: &NetworkParams,
    batch: &[(&[f64], f64)],
    loss: LossKind,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, NnError> {
    let (_, analytic) = backward(net, batch, loss)?;
    grad_check_grads(net, batch, loss, step, tol, &analytic)
}

/// Like [`grad_check`], but compares a caller-supplied gradient set. Useful
/// for demonstrating that a corrupted gradient is detected.
pub fn grad_check_grads(
    net: &NetworkParams,
    batch: &[(&[f64], f64)],
    loss: LossKind,
    step: f64,
    tol: f64,
    analytic: &GradientSet,
) -> Result<GradCheckReport, NnError> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(NnError::InvalidStep(step));
    }
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if !analytic.shape_matches(net) {
        return Err(NnError::ShapeAudit(
            "gradient set does not match parameter shapes".into(),
        ));
    }

    let mut work = net.clone();
    let mut max_rel_err = 0.0;
    let mut worst = None;

    let n_layers = net.weights.len();
    for layer in 0..n_layers {
        for kind in [ParamKind::Weight, ParamKind::Bias] {
            let len = match kind {
                ParamKind::Weight => net.weights[layer].len(),
                ParamKind::Bias => net.biases[layer].len(),
            };
            for index in 0..len {
                let numeric = {
                    let orig = *param_slot(&mut work, kind, layer, index);
                    *param_slot(&mut work, kind, layer, index) = orig + step;
                    let plus = batch_loss(&work, batch, loss)?;
                    *param_slot(&mut work, kind, layer, index) = orig - step;
                    let minus = batch_loss(&work, batch, loss)?;
                    *param_slot(&mut work, kind, layer, index) = orig;
                    (plus - minus) / (2.0 * step)
                };
                let a = match kind {
                    ParamKind::Weight => analytic.weights[layer][index],
                    ParamKind::Bias => analytic.biases[layer][index],
                };
                let rel_err = guarded_rel_err(a, numeric);
                if rel_err > max_rel_err {
                    max_rel_err = rel_err;
                    worst = Some(WorstEntry {
                        layer,
                        kind,
                        index,
                        analytic: a,
                        numeric,
                        rel_err,
                    });
                }
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        tol,
        pass: max_rel_err <= tol,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_spec(input_dim: usize, hidden: usize) -> LayerSpec {
        LayerSpec {
            input_dim,
            hidden_dims: vec![hidden],
            activation: Activation::Tanh,
            head: Head::Gaussian,
        }
    }

    #[test]
    fn nll_constant_matches_half_log_two_pi() {
        let exact = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_eq!(HALF_LN_TWO_PI, exact);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = LayerSpec::new(3);
        let a = init_params(&spec, 7).unwrap();
        let b = init_params(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&spec, 8).unwrap();
        assert!(
            a.weights
                .iter()
                .flatten()
                .zip(c.weights.iter().flatten())
                .any(|(x, y)| x != y),
            "distinct seeds must produce at least one differing weight"
        );
    }

    #[test]
    fn init_shapes_for_one_hidden_layer() {
        let spec = LayerSpec::new(1);
        let p = init_params(&spec, 0).unwrap();
        assert_eq!(p.weights[0].len(), 50); // 50 x 1
        assert_eq!(p.biases[0].len(), 50);
        assert_eq!(p.weights[1].len(), 100); // 2 x 50
        assert_eq!(p.biases[1].len(), 2);
        assert_eq!(spec.layer_dims(), vec![(1, 50), (50, 2)]);
        p.audit_shapes().unwrap();
    }

    #[test]
    fn init_rejects_zero_dims() {
        let mut spec = LayerSpec::new(1);
        spec.hidden_dims = vec![50, 0];
        assert!(matches!(
            init_params(&spec, 0),
            Err(NnError::InvalidSpec(_))
        ));
        let spec = LayerSpec {
            input_dim: 0,
            ..LayerSpec::new(1)
        };
        assert!(init_params(&spec, 0).is_err());
    }

    #[test]
    fn init_biases_zero_except_variance_unit() {
        let spec = LayerSpec::new(2);
        let p = init_params(&spec, 3).unwrap();
        assert!(p.biases[0].iter().all(|&b| b == 0.0));
        assert_eq!(p.biases[1][0], 0.0);
        assert_eq!(p.biases[1][1], softplus_inverse(1.0));
        // The chosen bias really does put the initial variance near 1.
        assert!((variance_transform(p.biases[1][1]) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_network_outputs_zero_mean_and_softplus_zero_variance() {
        let spec = LayerSpec::new(4);
        let net = NetworkParams::zeros(&spec).unwrap();
        let out = forward(&net, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(out.mu, 0.0);
        assert_eq!(out.sigma2, Some(variance_transform(0.0)));
    }

    #[test]
    fn single_linear_layer_multiplies_input() {
        // No hidden layers: mu = w * x with w = 2, x = 3.
        let spec = LayerSpec {
            input_dim: 1,
            hidden_dims: vec![],
            activation: Activation::Relu,
            head: Head::Gaussian,
        };
        let mut net = NetworkParams::zeros(&spec).unwrap();
        net.weights[0][0] = 2.0; // mu unit
        let out = forward(&net, &[3.0]).unwrap();
        assert_eq!(out.mu, 6.0);
    }

    #[test]
    fn forward_is_pure() {
        let net = init_params(&gaussian_spec(3, 8), 11).unwrap();
        let x = [0.3, -1.2, 2.5];
        let a = forward(&net, &x).unwrap();
        let b = forward(&net, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = init_params(&gaussian_spec(2, 4), 0).unwrap();
        assert!(matches!(
            forward(&net, &[1.0]),
            Err(NnError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            forward(&net, &[1.0, f64::NAN]),
            Err(NnError::NonFiniteInput(1))
        ));
    }

    #[test]
    fn mean_only_head_has_no_variance() {
        let spec = LayerSpec {
            head: Head::MeanOnly,
            ..LayerSpec::new(2)
        };
        let net = init_params(&spec, 1).unwrap();
        let out = forward(&net, &[0.1, 0.2]).unwrap();
        assert_eq!(out.sigma2, None);
        assert!(matches!(out.gaussian(), Err(NnError::MissingVariance)));
    }

    #[test]
    fn variance_transform_values() {
        assert!((variance_transform(0.0) - (2.0f64.ln() + 1e-6)).abs() < 1e-12);
        assert!((variance_transform(-100.0) - 1e-6).abs() < 1e-12);
        assert!((variance_transform(100.0) - (100.0 + 1e-6)).abs() < 1e-9);
        // No overflow for extreme raw values.
        assert!(variance_transform(1e4).is_finite());
        assert!(variance_transform(-1e4) >= VARIANCE_FLOOR);
    }

    #[test]
    fn nll_loss_hand_values() {
        let c = HALF_LN_TWO_PI;
        let p = |mu, sigma2| GaussianPrediction { mu, sigma2 };
        assert!((nll_loss(&p(0.0, 1.0), 0.0).unwrap() - c).abs() < 1e-12);
        assert!((nll_loss(&p(0.0, 1.0), 2.0).unwrap() - (2.0 + c)).abs() < 1e-12);
        let expected = 0.5 * 4.0f64.ln() + c;
        assert!((nll_loss(&p(1.0, 4.0), 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.612086).abs() < 1e-6);
    }

    #[test]
    fn nll_loss_rejects_nonpositive_variance() {
        let p = GaussianPrediction { mu: 0.0, sigma2: 0.0 };
        assert!(matches!(
            nll_loss(&p, 1.0),
            Err(NnError::NonPositiveVariance(_))
        ));
        let p = GaussianPrediction { mu: 0.0, sigma2: f64::NAN };
        assert!(nll_loss(&p, 1.0).is_err());
    }

    #[test]
    fn mse_loss_hand_values() {
        assert_eq!(mse_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(mse_loss(&[5.0], &[2.0]).unwrap(), 9.0);
        assert!(matches!(
            mse_loss(&[1.0], &[1.0, 2.0]),
            Err(NnError::LengthMismatch { .. })
        ));
        assert!(matches!(mse_loss(&[], &[]), Err(NnError::EmptyBatch)));
    }

    #[test]
    fn backward_zero_residual_mse_has_zero_output_gradient() {
        // A zero network predicts 0 everywhere; targets 0 mean zero residual.
        let spec = LayerSpec {
            input_dim: 1,
            hidden_dims: vec![],
            activation: Activation::Relu,
            head: Head::MeanOnly,
        };
        let net = NetworkParams::zeros(&spec).unwrap();
        let x = [1.0];
        let batch = [(&x[..], 0.0), (&x[..], 0.0)];
        let (loss, grads) = backward(&net, &batch, LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.weights[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_single_linear_unit_mse_gradient_is_two_w() {
        let spec = LayerSpec {
            input_dim: 1,
            hidden_dims: vec![],
            activation: Activation::Relu,
            head: Head::MeanOnly,
        };
        let mut net = NetworkParams::zeros(&spec).unwrap();
        net.weights[0][0] = 3.0;
        let x = [1.0];
        let batch = [(&x[..], 0.0)];
        let (loss, grads) = backward(&net, &batch, LossKind::Mse).unwrap();
        assert_eq!(loss, 9.0);
        assert_eq!(grads.weights[0][0], 6.0);
    }

    #[test]
    fn backward_loss_matches_forward_loss() {
        let net = init_params(&gaussian_spec(2, 6), 13).unwrap();
        let xs = [[0.5, -0.3], [1.2, 0.8], [-0.7, 0.1]];
        let batch: Vec<(&[f64], f64)> =
            xs.iter().map(|x| (&x[..], 0.4)).collect();
        for loss in [LossKind::Nll, LossKind::Mse] {
            let (bl, _) = backward(&net, &batch, loss).unwrap();
            let fl = batch_loss(&net, &batch, loss).unwrap();
            assert!((bl - fl).abs() <= 1e-12 * fl.abs().max(1.0));
        }
    }

    #[test]
    fn backward_rejects_nll_on_mean_only_head() {
        let spec = LayerSpec {
            head: Head::MeanOnly,
            ..LayerSpec::new(1)
        };
        let net = init_params(&spec, 0).unwrap();
        let x = [1.0];
        let batch = [(&x[..], 0.0)];
        assert!(matches!(
            backward(&net, &batch, LossKind::Nll),
            Err(NnError::NllRequiresGaussianHead)
        ));
    }

    fn random_batch(seed: u64, n: usize, dim: usize) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = rng.random_range(-3.0..3.0);
                (x, y)
            })
            .collect()
    }

    #[test]
    fn grad_check_passes_on_small_gaussian_net() {
        let net = init_params(&gaussian_spec(1, 50), 42).unwrap();
        let data = random_batch(1, 8, 1);
        let batch: Vec<(&[f64], f64)> = data.iter().map(|(x, y)| (&x[..], *y)).collect();
        let report = grad_check(&net, &batch, LossKind::Nll, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "max_rel_err = {}", report.max_rel_err);
    }

    #[test]
    fn grad_check_passes_for_mse_on_mean_only_net() {
        let spec = LayerSpec {
            input_dim: 2,
            hidden_dims: vec![10],
            activation: Activation::Tanh,
            head: Head::MeanOnly,
        };
        let net = init_params(&spec, 5).unwrap();
        let data = random_batch(2, 8, 2);
        let batch: Vec<(&[f64], f64)> = data.iter().map(|(x, y)| (&x[..], *y)).collect();
        let report = grad_check(&net, &batch, LossKind::Mse, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "max_rel_err = {}", report.max_rel_err);
    }

    #[test]
    fn grad_check_passes_on_relu_net() {
        let spec = LayerSpec {
            activation: Activation::Relu,
            ..gaussian_spec(1, 20)
        };
        let net = init_params(&spec, 9).unwrap();
        let data = random_batch(3, 8, 1);
        let batch: Vec<(&[f64], f64)> = data.iter().map(|(x, y)| (&x[..], *y)).collect();
        let report = grad_check(&net, &batch, LossKind::Nll, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "max_rel_err = {}", report.max_rel_err);
    }

    #[test]
    fn grad_check_flags_corrupted_entry() {
        let net = init_params(&gaussian_spec(1, 10), 21).unwrap();
        let data = random_batch(4, 8, 1);
        let batch: Vec<(&[f64], f64)> = data.iter().map(|(x, y)| (&x[..], *y)).collect();
        let (_, mut grads) = backward(&net, &batch, LossKind::Nll).unwrap();
        grads.weights[1][3] *= 2.0;
        let report =
            grad_check_grads(&net, &batch, LossKind::Nll, 1e-5, 1e-4, &grads).unwrap();
        assert!(!report.pass);
        let worst = report.worst.unwrap();
        assert_eq!(worst.layer, 1);
        assert_eq!(worst.kind, ParamKind::Weight);
        assert_eq!(worst.index, 3);
    }

    #[test]
    fn grad_check_rejects_bad_step() {
        let net = init_params(&gaussian_spec(1, 4), 0).unwrap();
        let x = [1.0];
        let batch = [(&x[..], 0.0)];
        assert!(matches!(
            grad_check(&net, &batch, LossKind::Nll, 0.0, 1e-4),
            Err(NnError::InvalidStep(_))
        ));
        assert!(matches!(
            grad_check(&net, &batch, LossKind::Nll, 0.5, 1e-4),
            Err(NnError::InvalidStep(_))
        ));
    }
}
