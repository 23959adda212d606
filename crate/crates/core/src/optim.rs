//! Adam parameter updates and learning-rate grid search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{GradientSet, NetworkParams};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("gradient shapes do not match parameter shapes")]
    ShapeMismatch,
    #[error("non-finite gradient encountered (divergence upstream)")]
    NonFiniteGradient,
    #[error("learning-rate grid must be strictly positive and strictly decreasing")]
    InvalidGrid,
    #[error("every learning rate produced a non-finite score")]
    AllCandidatesDisqualified,
}

/// Adam optimizer state: first/second moment accumulators plus
/// hyperparameters. Owned by exactly one training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with zero moments and the standard defaults
    /// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
    pub fn new(params: &NetworkParams, lr: f64) -> Self {
        Self {
            m: GradientSet::zeros_like(params),
            v: GradientSet::zeros_like(params),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update:
///
/// ```text
/// m <- b1 m + (1 - b1) g        v <- b2 v + (1 - b2) g^2
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// ```
///
/// with bias-corrected `m_hat = m / (1 - b1^t)` and `v_hat = v / (1 - b2^t)`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grads: &GradientSet,
) -> Result<(), OptimError> {
    if !grads.shape_matches(params) || !state.m.shape_matches(params) {
        return Err(OptimError::ShapeMismatch);
    }
    if !grads.all_finite() {
        return Err(OptimError::NonFiniteGradient);
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..p.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    };
    for l in 0..params.weights.len() {
        update(
            &mut params.weights[l],
            &mut state.m.weights[l],
            &mut state.v.weights[l],
            &grads.weights[l],
        );
        update(
            &mut params.biases[l],
            &mut state.m.biases[l],
            &mut state.v.biases[l],
            &grads.biases[l],
        );
    }
    Ok(())
}

/// Candidate learning rates, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrGrid {
    pub values: Vec<f64>,
}

impl Default for LrGrid {
    /// Log-scale grid from 0.1 down to 1e-5.
    fn default() -> Self {
        Self {
            values: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
        }
    }
}

impl LrGrid {
    pub fn validate(&self) -> Result<(), OptimError> {
        if self.values.is_empty() {
            return Err(OptimError::InvalidGrid);
        }
        let positive = self.values.iter().all(|&v| v > 0.0 && v.is_finite());
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if positive && decreasing {
            Ok(())
        } else {
            Err(OptimError::InvalidGrid)
        }
    }
}

/// Evaluates `score_fn` at every grid value and returns the best learning
/// rate. Ties break toward the larger rate; non-finite scores disqualify
/// their candidate.
pub fn lr_grid_search(
    grid: &LrGrid,
    mut score_fn: impl FnMut(f64) -> f64,
    lower_is_better: bool,
) -> Result<f64, OptimError> {
    grid.validate()?;
    let mut best: Option<(f64, f64)> = None;
    for &lr in &grid.values {
        let score = score_fn(lr);
        if !score.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, s)) => {
                if lower_is_better {
                    score < s
                } else {
                    score > s
                }
            }
        };
        if better {
            best = Some((lr, score));
        }
    }
    best.map(|(lr, _)| lr)
        .ok_or(OptimError::AllCandidatesDisqualified)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, LayerSpec};

    fn scalar_param() -> NetworkParams {
        // One linear unit: a single weight plus bias.
        let spec = LayerSpec {
            input_dim: 1,
            hidden_dims: vec![],
            activation: crate::nn::Activation::Relu,
            head: crate::nn::Head::MeanOnly,
        };
        NetworkParams::zeros(&spec).unwrap()
    }

    fn grad_of(params: &NetworkParams, w: f64) -> GradientSet {
        let mut g = GradientSet::zeros_like(params);
        g.weights[0][0] = w;
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = scalar_param();
        p.weights[0][0] = 1.5;
        let before = p.clone();
        let mut state = AdamState::new(&p, 0.1);
        let g = grad_of(&p, 0.0);
        adam_step(&mut state, &mut p, &g).unwrap();
        assert_eq!(p.weights, before.weights);
        assert_eq!(p.biases, before.biases);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_up_to_eps() {
        for (g, expected) in [(1.0, -0.1), (-1.0, 0.1)] {
            let mut p = scalar_param();
            let mut state = AdamState::new(&p, 0.1);
            let grad = grad_of(&p, g);
            adam_step(&mut state, &mut p, &grad).unwrap();
            assert!((p.weights[0][0] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_step_is_deterministic() {
        let p0 = init_params(&LayerSpec::new(2), 1).unwrap();
        let mut g = GradientSet::zeros_like(&p0);
        for buf in g.weights.iter_mut().chain(g.biases.iter_mut()) {
            for (i, v) in buf.iter_mut().enumerate() {
                *v = (i as f64 * 0.37).sin();
            }
        }
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p, 0.01);
            for _ in 0..10 {
                adam_step(&mut s, &mut p, &g).unwrap();
            }
            (p, s)
        };
        let (pa, sa) = run();
        let (pb, sb) = run();
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
    }

    #[test]
    fn second_moments_stay_nonnegative_and_params_finite() {
        let mut p = init_params(&LayerSpec::new(3), 4).unwrap();
        let mut state = AdamState::new(&p, 0.05);
        let mut g = GradientSet::zeros_like(&p);
        for step in 0..50 {
            for buf in g.weights.iter_mut().chain(g.biases.iter_mut()) {
                for (i, v) in buf.iter_mut().enumerate() {
                    *v = ((step * 31 + i) as f64 * 0.11).cos() * 3.0;
                }
            }
            adam_step(&mut state, &mut p, &g).unwrap();
        }
        assert!(state
            .v
            .weights
            .iter()
            .chain(&state.v.biases)
            .all(|buf| buf.iter().all(|&v| v >= 0.0)));
        assert!(p.audit_shapes().is_ok());
    }

    #[test]
    fn rejects_shape_mismatch_and_nonfinite_gradients() {
        let mut p = scalar_param();
        let other = init_params(&LayerSpec::new(2), 0).unwrap();
        let mut state = AdamState::new(&p, 0.1);
        let bad_shape = GradientSet::zeros_like(&other);
        assert_eq!(
            adam_step(&mut state, &mut p, &bad_shape),
            Err(OptimError::ShapeMismatch)
        );
        let nan_grad = grad_of(&p, f64::NAN);
        assert_eq!(
            adam_step(&mut state, &mut p, &nan_grad),
            Err(OptimError::NonFiniteGradient)
        );
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        // L(w) = w^2 from w = 5 with lr = 0.1 must reach |w| < 0.1 within
        // 500 steps.
        let mut p = scalar_param();
        p.weights[0][0] = 5.0;
        let mut state = AdamState::new(&p, 0.1);
        let mut reached = None;
        for step in 0..500 {
            let w = p.weights[0][0];
            let g = grad_of(&p, 2.0 * w);
            adam_step(&mut state, &mut p, &g).unwrap();
            if p.weights[0][0].abs() < 0.1 {
                reached = Some(step + 1);
                break;
            }
        }
        assert!(reached.is_some(), "final w = {}", p.weights[0][0]);
    }

    #[test]
    fn grid_search_picks_argmin() {
        let grid = LrGrid::default();
        let chosen = lr_grid_search(
            &grid,
            |lr| match lr {
                l if l == 1e-1 => 5.0,
                l if l == 1e-2 => 3.0,
                l if l == 1e-3 => 4.0,
                _ => 6.0,
            },
            true,
        )
        .unwrap();
        assert_eq!(chosen, 1e-2);
    }

    #[test]
    fn grid_search_ties_break_toward_larger_lr() {
        let chosen = lr_grid_search(&LrGrid::default(), |_| 1.0, true).unwrap();
        assert_eq!(chosen, 1e-1);
    }

    #[test]
    fn grid_search_skips_nan_scores() {
        let chosen = lr_grid_search(
            &LrGrid::default(),
            |lr| if lr == 1e-1 { f64::NAN } else { lr },
            true,
        )
        .unwrap();
        assert_eq!(chosen, 1e-5);
        let all_nan = lr_grid_search(&LrGrid::default(), |_| f64::NAN, true);
        assert_eq!(all_nan, Err(OptimError::AllCandidatesDisqualified));
    }

    #[test]
    fn grid_search_is_scale_invariant() {
        let scores = |lr: f64| (lr * 1e5).ln().abs() + 0.5;
        let a = lr_grid_search(&LrGrid::default(), scores, true).unwrap();
        let b = lr_grid_search(&LrGrid::default(), |lr| 17.0 * scores(lr), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_search_higher_is_better_mode() {
        let chosen = lr_grid_search(&LrGrid::default(), |lr| lr, false).unwrap();
        assert_eq!(chosen, 1e-1);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        for values in [vec![], vec![1e-2, 1e-1], vec![1e-1, -1e-2]] {
            let grid = LrGrid { values };
            assert_eq!(
                lr_grid_search(&grid, |_| 0.0, true),
                Err(OptimError::InvalidGrid)
            );
        }
    }
}
