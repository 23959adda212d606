//! Metrics and reporting: NLL and RMSE, interval coverage, repeated-seed
//! aggregation into `mean ± std` tables, and plot-ready interval series.
//!
//! All aggregates use the population standard deviation; per-run values are
//! retained in every report so aggregates can be recomputed and checked.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, RegressionData};
use crate::ensemble::{train_ensemble, Ensemble, EnsembleConfig, EnsembleError};
use crate::nn::{nll_loss, GaussianPrediction, Head, LossKind, NnError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {preds} predictions vs {ys} targets")]
    LengthMismatch { preds: usize, ys: usize },
    #[error("repeated runs require n_runs >= 2, got {0}")]
    TooFewRuns(usize),
    #[error("all {0} runs failed")]
    AllRunsFailed(usize),
    #[error("report file {path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The four model variants compared against each other: ensemble or single
/// network, trained on NLL (Gaussian head) or on squared error (mean-only
/// head).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    EnsembleNll,
    EnsembleMse,
    SingleNll,
    SingleMse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::EnsembleNll,
        ModelKind::EnsembleMse,
        ModelKind::SingleNll,
        ModelKind::SingleMse,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::EnsembleNll => "ensemble_nll",
            ModelKind::EnsembleMse => "ensemble_mse",
            ModelKind::SingleNll => "single_nll",
            ModelKind::SingleMse => "single_mse",
        }
    }

    pub fn training_loss(self) -> LossKind {
        match self {
            ModelKind::EnsembleNll | ModelKind::SingleNll => LossKind::Nll,
            ModelKind::EnsembleMse | ModelKind::SingleMse => LossKind::Mse,
        }
    }

    pub fn is_single(self) -> bool {
        matches!(self, ModelKind::SingleNll | ModelKind::SingleMse)
    }

    /// Specializes a base config for this variant: loss, matching head, and
    /// member count (1 for single networks).
    pub fn configure(self, base: &EnsembleConfig) -> EnsembleConfig {
        let mut cfg = base.clone();
        cfg.loss = self.training_loss();
        cfg.layer_spec.head = match cfg.loss {
            LossKind::Nll => Head::Gaussian,
            LossKind::Mse => Head::MeanOnly,
        };
        if self.is_single() {
            cfg.m_members = 1;
        }
        cfg
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Root mean squared error: `sqrt(mean((y - mu)^2))`.
pub fn rmse_metric(mus: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if mus.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            preds: mus.len(),
            ys: ys.len(),
        });
    }
    if mus.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = mus
        .iter()
        .zip(ys)
        .map(|(m, y)| {
            let r = y - m;
            r * r
        })
        .sum();
    Ok((sum / mus.len() as f64).sqrt())
}

/// Mean Gaussian negative log-likelihood over `(mu, sigma2)` predictions.
pub fn nll_metric(preds: &[(f64, f64)], ys: &[f64]) -> Result<f64, EvalError> {
    if preds.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            ys: ys.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (&(mu, sigma2), &y) in preds.iter().zip(ys) {
        total += nll_loss(&GaussianPrediction { mu, sigma2 }, y)?;
    }
    Ok(total / preds.len() as f64)
}

/// One plot row: ground truth and the predicted interval center/half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub index: usize,
    pub y_true: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Ordered rows in original chronological order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSeries {
    pub rows: Vec<IntervalRow>,
}

impl IntervalSeries {
    /// CSV with columns `index,y_true,mu,sigma`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,y_true,mu,sigma\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.index, r.y_true, r.mu, r.sigma);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv()).map_err(|e| EvalError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Fraction of rows whose target lies within `k` predicted standard
/// deviations of the predicted mean.
pub fn coverage(series: &IntervalSeries, k: f64) -> f64 {
    assert!(!series.rows.is_empty(), "coverage of an empty series");
    let hits = series
        .rows
        .iter()
        .filter(|r| (r.y_true - r.mu).abs() <= k * r.sigma)
        .count();
    hits as f64 / series.rows.len() as f64
}

/// Samples up to `sample_size` test points without replacement, restores
/// their original chronological order, and evaluates the model on them.
pub fn emit_interval_series(
    model: &Ensemble,
    test: &RegressionData,
    sample_size: usize,
    seed: u64,
) -> Result<IntervalSeries, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = test.len();
    let take = sample_size.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = rand::seq::index::sample(&mut rng, n, take).into_vec();
    indices.sort_unstable();

    let mut rows = Vec::with_capacity(take);
    for idx in indices {
        let (mu, sigma2) = model.predict_mean_variance(&test.xs[idx])?;
        rows.push(IntervalRow {
            index: idx,
            y_true: test.ys[idx],
            mu,
            sigma: sigma2.sqrt(),
        });
    }
    Ok(IntervalSeries { rows })
}

/// `(nll, rmse)` of a trained model over a test set, in raw units.
pub fn metrics_on(model: &Ensemble, test: &RegressionData) -> Result<(f64, f64), EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut preds = Vec::with_capacity(test.len());
    for x in &test.xs {
        preds.push(model.predict_mean_variance(x)?);
    }
    let mus: Vec<f64> = preds.iter().map(|p| p.0).collect();
    let nll = nll_metric(&preds, &test.ys)?;
    let rmse = rmse_metric(&mus, &test.ys)?;
    Ok((nll, rmse))
}

/// Metrics of one training/evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub nll: f64,
    pub rmse: f64,
}

/// A run that diverged and was excluded from the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub run: usize,
    pub seed: u64,
    pub message: String,
}

/// `mean ± std` pairs for both metrics (population convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub nll_mean: f64,
    pub nll_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

fn mean_pop_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_runs(runs: &[RunMetrics]) -> Self {
        let nlls: Vec<f64> = runs.iter().map(|r| r.nll).collect();
        let rmses: Vec<f64> = runs.iter().map(|r| r.rmse).collect();
        let (nll_mean, nll_std) = mean_pop_std(&nlls);
        let (rmse_mean, rmse_std) = mean_pop_std(&rmses);
        Self {
            nll_mean,
            nll_std,
            rmse_mean,
            rmse_std,
        }
    }
}

/// Per-run metrics plus aggregates for one model variant on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset_id: String,
    pub model_kind: ModelKind,
    pub per_run: Vec<RunMetrics>,
    pub failed_runs: Vec<FailedRun>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    /// Recomputes the aggregates from the retained per-run values; callers
    /// can compare against `self.aggregate` to verify self-consistency.
    pub fn recompute_aggregate(&self) -> Aggregate {
        Aggregate::from_runs(&self.per_run)
    }

    /// One table row of `mean ± std` cells.
    pub fn render_row(&self) -> String {
        format!(
            "{:<14} {:<13} {:>10.4} ± {:<10.4} {:>10.4} ± {:<10.4} {:>8}",
            self.dataset_id,
            self.model_kind.label(),
            self.aggregate.nll_mean,
            self.aggregate.nll_std,
            self.aggregate.rmse_mean,
            self.aggregate.rmse_std,
            self.failed_runs.len(),
        )
    }
}

/// Renders reports as a metric table, one `mean ± std` cell per metric.
pub fn render_report_table(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:<13} {:>23} {:>23} {:>8}",
        "dataset", "model", "NLL", "RMSE", "failed"
    );
    for r in reports {
        let _ = writeln!(out, "{}", r.render_row());
    }
    out
}

/// Task description for [`run_repeated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedTask {
    pub dataset_id: String,
    pub model_kind: ModelKind,
    pub config: EnsembleConfig,
}

/// Trains and evaluates `n_runs` times, offsetting the base seed by
/// `seed_stride` per run, and aggregates the per-run metrics. Diverged runs
/// are excluded from the aggregates but reported; if every run fails, an
/// error is returned.
pub fn run_repeated(
    train: &RegressionData,
    test: &RegressionData,
    task: &RepeatedTask,
    n_runs: usize,
    base_seed: u64,
    seed_stride: u64,
) -> Result<MetricReport, EvalError> {
    if n_runs < 2 {
        return Err(EvalError::TooFewRuns(n_runs));
    }
    let mut per_run = Vec::new();
    let mut failed_runs = Vec::new();
    for run in 0..n_runs {
        let seed = base_seed.wrapping_add(seed_stride.wrapping_mul(run as u64));
        let mut cfg = task.model_kind.configure(&task.config);
        cfg.base_seed = seed;
        match train_ensemble(train, &cfg) {
            Ok(outcome) => {
                let (nll, rmse) = metrics_on(&outcome.ensemble, test)?;
                per_run.push(RunMetrics { run, seed, nll, rmse });
            }
            Err(e @ (EnsembleError::MembersDiverged(_) | EnsembleError::Divergence { .. })) => {
                failed_runs.push(FailedRun {
                    run,
                    seed,
                    message: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    if per_run.is_empty() {
        return Err(EvalError::AllRunsFailed(n_runs));
    }
    let aggregate = Aggregate::from_runs(&per_run);
    Ok(MetricReport {
        dataset_id: task.dataset_id.clone(),
        model_kind: task.model_kind,
        per_run,
        failed_runs,
        aggregate,
    })
}

/// One cell of the model-comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub kind: ModelKind,
    pub nll: f64,
    pub rmse: f64,
}

/// Metrics of all four model variants trained on identical splits and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub dataset_id: String,
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn cell(&self, kind: ModelKind) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| c.kind == kind)
    }

    /// Human-readable table. Cells whose metric matches the model's own
    /// training criterion are marked with `*`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {}", self.dataset_id);
        let _ = writeln!(out, "{:<13} {:>12} {:>12}", "model", "NLL", "RMSE");
        for c in &self.cells {
            let nll_mark = if c.kind.training_loss() == LossKind::Nll { "*" } else { " " };
            let rmse_mark = if c.kind.training_loss() == LossKind::Mse { "*" } else { " " };
            let _ = writeln!(
                out,
                "{:<13} {:>11.4}{} {:>11.4}{}",
                c.kind.label(),
                c.nll,
                nll_mark,
                c.rmse,
                rmse_mark
            );
        }
        let _ = writeln!(out, "(*) metric matches the model's training criterion");
        out
    }
}

/// Trains all four model variants on identical splits and seeds and reports
/// both metrics for each.
pub fn compare_models(
    train: &RegressionData,
    test: &RegressionData,
    base_config: &EnsembleConfig,
    dataset_id: &str,
) -> Result<ComparisonTable, EvalError> {
    let mut cells = Vec::with_capacity(ModelKind::ALL.len());
    for kind in ModelKind::ALL {
        let cfg = kind.configure(base_config);
        let outcome = train_ensemble(train, &cfg)?;
        let (nll, rmse) = metrics_on(&outcome.ensemble, test)?;
        cells.push(ComparisonCell { kind, nll, rmse });
    }
    Ok(ComparisonTable {
        dataset_id: dataset_id.to_string(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_chrono, toy_generate};
    use crate::nn::{mse_loss, LayerSpec, HALF_LN_TWO_PI};
    use rand::Rng;

    #[test]
    fn rmse_hand_values_and_homogeneity() {
        assert_eq!(rmse_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse_metric(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-12);
        // Scaling residuals by c scales RMSE by c.
        let base = rmse_metric(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let scaled = rmse_metric(&[0.0, 0.0], &[3.0, 6.0]).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12);
        assert!(matches!(rmse_metric(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn rmse_squared_times_n_equals_summed_squared_error() {
        let mus = [0.3, -1.0, 2.5, 4.0];
        let ys = [0.1, -1.7, 3.0, 3.2];
        let rmse = rmse_metric(&mus, &ys).unwrap();
        let sse = mse_loss(&mus, &ys).unwrap();
        let lhs = rmse * rmse * mus.len() as f64;
        assert!((lhs - sse).abs() <= 1e-12 * sse.max(1.0));
    }

    #[test]
    fn nll_metric_hand_values() {
        let c = HALF_LN_TWO_PI;
        let one = nll_metric(&[(0.0, 1.0)], &[0.0]).unwrap();
        assert!((one - c).abs() < 1e-12);
        let two = nll_metric(&[(0.0, 1.0)], &[2.0]).unwrap();
        assert!((two - (2.0 + c)).abs() < 1e-12);
        let avg = nll_metric(&[(0.0, 1.0), (0.0, 1.0)], &[0.0, 2.0]).unwrap();
        assert!((avg - (1.0 + c)).abs() < 1e-12);
        assert!(nll_metric(&[(0.0, 0.0)], &[0.0]).is_err());
    }

    fn series_from(residuals: &[(f64, f64)]) -> IntervalSeries {
        IntervalSeries {
            rows: residuals
                .iter()
                .enumerate()
                .map(|(index, &(r, sigma))| IntervalRow {
                    index,
                    y_true: r,
                    mu: 0.0,
                    sigma,
                })
                .collect(),
        }
    }

    #[test]
    fn coverage_degenerate_cases() {
        let exact = series_from(&[(0.0, 1.0), (0.0, 2.0)]);
        assert_eq!(coverage(&exact, 0.5), 1.0);
        let offset = series_from(&[(0.3, 1.0), (-0.4, 1.0)]);
        assert_eq!(coverage(&offset, 0.0), 0.0);
    }

    #[test]
    fn coverage_of_calibrated_gaussian_residuals_is_about_68_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rows: Vec<(f64, f64)> = (0..100_000)
            .map(|_| {
                let sigma = rng.random_range(0.5..3.0);
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                (sigma * z, sigma)
            })
            .collect();
        let series = series_from(&rows);
        let c1 = coverage(&series, 1.0);
        assert!((c1 - 0.6827).abs() < 0.02, "coverage {c1}");
        // Monotone non-decreasing in k.
        let ks = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
        let cs: Vec<f64> = ks.iter().map(|&k| coverage(&series, k)).collect();
        assert!(cs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn aggregate_hand_values() {
        let runs: Vec<RunMetrics> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(run, &v)| RunMetrics {
                run,
                seed: run as u64,
                nll: v,
                rmse: 2.0 * v,
            })
            .collect();
        let agg = Aggregate::from_runs(&runs);
        assert!((agg.nll_mean - 2.0).abs() < 1e-15);
        assert!((agg.nll_std - 0.816497).abs() < 1e-6);
        assert!((agg.rmse_mean - 4.0).abs() < 1e-15);
    }

    fn toy_split(seed: u64) -> (RegressionData, RegressionData) {
        let samples = toy_generate(120, -3.0, 3.0, seed).unwrap();
        let (train, test) = split_chrono(&samples, 0.8).unwrap();
        (
            RegressionData::from_toy(&train),
            RegressionData::from_toy(&test),
        )
    }

    fn tiny_config() -> EnsembleConfig {
        let mut cfg = EnsembleConfig::new(LayerSpec::new(1));
        cfg.m_members = 2;
        cfg.iterations = 60;
        cfg.batch_size = 16;
        cfg
    }

    #[test]
    fn run_repeated_is_deterministic_and_self_consistent() {
        let (train, test) = toy_split(3);
        let task = RepeatedTask {
            dataset_id: "toy".into(),
            model_kind: ModelKind::EnsembleNll,
            config: tiny_config(),
        };
        let a = run_repeated(&train, &test, &task, 3, 100, 1000).unwrap();
        let b = run_repeated(&train, &test, &task, 3, 100, 1000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_run.len(), 3);
        let re = a.recompute_aggregate();
        assert!((re.nll_mean - a.aggregate.nll_mean).abs() <= 1e-12);
        assert!((re.rmse_std - a.aggregate.rmse_std).abs() <= 1e-12);
    }

    #[test]
    fn run_repeated_with_zero_stride_has_zero_std() {
        let (train, test) = toy_split(5);
        let task = RepeatedTask {
            dataset_id: "toy".into(),
            model_kind: ModelKind::EnsembleNll,
            config: tiny_config(),
        };
        let report = run_repeated(&train, &test, &task, 2, 42, 0).unwrap();
        assert_eq!(report.aggregate.nll_std, 0.0);
        assert_eq!(report.aggregate.rmse_std, 0.0);
    }

    #[test]
    fn run_repeated_requires_at_least_two_runs() {
        let (train, test) = toy_split(6);
        let task = RepeatedTask {
            dataset_id: "toy".into(),
            model_kind: ModelKind::EnsembleNll,
            config: tiny_config(),
        };
        assert!(matches!(
            run_repeated(&train, &test, &task, 1, 0, 1),
            Err(EvalError::TooFewRuns(1))
        ));
    }

    #[test]
    fn run_repeated_reports_diverged_runs() {
        let (train, test) = toy_split(7);
        let mut cfg = tiny_config();
        cfg.lr = 1e160;
        let task = RepeatedTask {
            dataset_id: "toy".into(),
            model_kind: ModelKind::EnsembleNll,
            config: cfg,
        };
        match run_repeated(&train, &test, &task, 2, 0, 1000) {
            Err(EvalError::AllRunsFailed(2)) => {}
            other => panic!("expected all runs to fail, got {other:?}"),
        }
    }

    #[test]
    fn interval_series_clamps_sorts_and_matches_direct_predictions() {
        let (train, test) = toy_split(8);
        let ens = train_ensemble(&train, &tiny_config()).unwrap().ensemble;
        let series = emit_interval_series(&ens, &test, 100, 9).unwrap();
        assert_eq!(series.rows.len(), test.len()); // clamped: test has 24 rows
        assert!(series.rows.windows(2).all(|w| w[0].index < w[1].index));
        for row in &series.rows {
            let (mu, sigma2) = ens.predict_mean_variance(&test.xs[row.index]).unwrap();
            assert_eq!(row.mu, mu);
            assert_eq!(row.sigma, sigma2.sqrt());
            assert!(row.sigma > 0.0);
        }
        let sub = emit_interval_series(&ens, &test, 10, 9).unwrap();
        assert_eq!(sub.rows.len(), 10);
    }

    #[test]
    fn comparison_table_is_complete_finite_and_deterministic() {
        let (train, test) = toy_split(10);
        let cfg = tiny_config();
        let a = compare_models(&train, &test, &cfg, "toy").unwrap();
        assert_eq!(a.cells.len(), 4);
        for cell in &a.cells {
            assert!(cell.nll.is_finite() && cell.rmse.is_finite());
        }
        let b = compare_models(&train, &test, &cfg, "toy").unwrap();
        assert_eq!(a, b);
        let rendered = a.render();
        for kind in ModelKind::ALL {
            assert!(rendered.contains(kind.label()));
        }
    }

    #[test]
    fn report_rows_render_mean_plus_minus_std() {
        let report = MetricReport {
            dataset_id: "d0".into(),
            model_kind: ModelKind::EnsembleNll,
            per_run: vec![
                RunMetrics { run: 0, seed: 0, nll: 1.0, rmse: 2.0 },
                RunMetrics { run: 1, seed: 1, nll: 3.0, rmse: 4.0 },
            ],
            failed_runs: vec![],
            aggregate: Aggregate {
                nll_mean: 2.0,
                nll_std: 1.0,
                rmse_mean: 3.0,
                rmse_std: 1.0,
            },
        };
        let row = report.render_row();
        assert!(row.contains("2.0000 ± 1.0000"));
        assert!(row.contains("3.0000 ± 1.0000"));
        let table = render_report_table(&[report]);
        assert!(table.contains("NLL"));
        assert!(table.contains("RMSE"));
    }
}
