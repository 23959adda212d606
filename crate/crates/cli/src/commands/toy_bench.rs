//! `toy-bench`: the full sinusoidal benchmark. Generates toy data on
//! [-3, 3], trains ensemble and single networks under both training
//! criteria, and emits interval series over the [-6, 6] grid, a four-way
//! metric table, and an extrapolation-uncertainty summary.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use soc_ensemble::data::{split_regression, toy_eval_grid, toy_generate, RegressionData};
use soc_ensemble::ensemble::{train_ensemble, Ensemble, EnsembleConfig};
use soc_ensemble::eval::{
    metrics_on, render_report_table, run_repeated, ComparisonCell, ComparisonTable,
    IntervalRow, IntervalSeries, ModelKind, RepeatedTask,
};
use soc_ensemble::nn::LayerSpec;

use crate::config::{DataSource, RunConfig};

const GRID_STEP: f64 = 0.1;
const RUN_SEED_STRIDE: u64 = 1000;
/// Interior region (well inside the training support) and extrapolation
/// region (outside it) used for the predicted-sigma comparison.
const INTERIOR: (f64, f64) = (-2.0, 2.0);
const EXTRAPOLATION: (f64, f64) = (4.0, 6.0);

#[derive(Debug, Args)]
pub struct ToyBenchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repeated runs per variant for the metric table (1 = single run).
    #[arg(long, default_value_t = 1)]
    pub n_runs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training iterations; the desk-scale default. Use 20000 to match the
    /// full telemetry protocol.
    #[arg(long, default_value_t = 4000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub members: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
}

fn grid_series(ensemble: &Ensemble, grid: &[f64]) -> Result<IntervalSeries> {
    let mut rows = Vec::with_capacity(grid.len());
    for (index, &x) in grid.iter().enumerate() {
        let (mu, sigma2) = ensemble
            .predict_mean_variance(&[x])
            .map_err(soc_ensemble::Error::from)?;
        rows.push(IntervalRow {
            index,
            y_true: 10.0 * x.sin(),
            mu,
            sigma: sigma2.sqrt(),
        });
    }
    Ok(IntervalSeries { rows })
}

fn mean_sigma_in(series: &IntervalSeries, grid: &[f64], region: (f64, f64)) -> f64 {
    let vals: Vec<f64> = series
        .rows
        .iter()
        .filter(|r| {
            let x = grid[r.index];
            x >= region.0 && x <= region.1
        })
        .map(|r| r.sigma)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn run(args: &ToyBenchArgs) -> Result<()> {
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| RunConfig::default().out.join("toy-bench"));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;

    let samples =
        toy_generate(args.n, -3.0, 3.0, args.seed).map_err(soc_ensemble::Error::from)?;
    let data = RegressionData::from_toy(&samples);
    let (train, test) = split_regression(&data, 0.8).map_err(soc_ensemble::Error::from)?;
    let grid = toy_eval_grid(-6.0, 6.0, GRID_STEP).map_err(soc_ensemble::Error::from)?;

    let mut base = EnsembleConfig::new(LayerSpec::new(1));
    base.m_members = args.members;
    base.batch_size = args.batch_size;
    base.iterations = args.iterations;
    base.lr = args.lr;
    base.base_seed = args.seed;

    // Train all four variants on the identical split and seed.
    let mut cells = Vec::new();
    let mut nll_series: Vec<(ModelKind, IntervalSeries)> = Vec::new();
    for kind in ModelKind::ALL {
        let cfg = kind.configure(&base);
        let ensemble = train_ensemble(&train, &cfg)
            .map_err(soc_ensemble::Error::from)?
            .ensemble;
        let (nll, rmse) = metrics_on(&ensemble, &test).map_err(soc_ensemble::Error::from)?;
        cells.push(ComparisonCell { kind, nll, rmse });

        let series = grid_series(&ensemble, &grid)?;
        series
            .write_csv(&out_dir.join(format!("series_{}.csv", kind.label())))
            .map_err(soc_ensemble::Error::from)?;
        if matches!(kind, ModelKind::EnsembleNll | ModelKind::SingleNll) {
            nll_series.push((kind, series));
        }
    }

    // Metric table: single-run cells, or mean ± std across repeated runs.
    let (table_txt, table_json) = if args.n_runs <= 1 {
        let table = ComparisonTable {
            dataset_id: format!("toy-{}", args.seed),
            cells,
        };
        (table.render(), serde_json::to_string_pretty(&table)?)
    } else {
        let mut reports = Vec::new();
        for kind in ModelKind::ALL {
            let task = RepeatedTask {
                dataset_id: format!("toy-{}", args.seed),
                model_kind: kind,
                config: base.clone(),
            };
            reports.push(
                run_repeated(&train, &test, &task, args.n_runs, args.seed, RUN_SEED_STRIDE)
                    .map_err(soc_ensemble::Error::from)?,
            );
        }
        (
            render_report_table(&reports),
            serde_json::to_string_pretty(&reports)?,
        )
    };
    std::fs::write(out_dir.join("metrics_table.txt"), &table_txt)?;
    std::fs::write(out_dir.join("metrics_table.json"), table_json)?;

    // Predicted-sigma comparison between the training region and the
    // extrapolation region, for ensemble and single network.
    let mut summary_txt = String::new();
    let mut summary_models = Vec::new();
    for (kind, series) in &nll_series {
        let interior = mean_sigma_in(series, &grid, INTERIOR);
        let extrapolation = mean_sigma_in(series, &grid, EXTRAPOLATION);
        let _ = writeln!(
            summary_txt,
            "model={} mean_sigma interior[{},{}]={} extrapolation[{},{}]={} ratio={}",
            kind.label(),
            INTERIOR.0,
            INTERIOR.1,
            interior,
            EXTRAPOLATION.0,
            EXTRAPOLATION.1,
            extrapolation,
            extrapolation / interior
        );
        summary_models.push(serde_json::json!({
            "model": kind.label(),
            "mean_sigma_interior": interior,
            "mean_sigma_extrapolation": extrapolation,
            "ratio": extrapolation / interior,
        }));
    }
    let summary_json = serde_json::to_string_pretty(&serde_json::json!({
        "grid": {"x_min": -6.0, "x_max": 6.0, "step": GRID_STEP},
        "interior": [INTERIOR.0, INTERIOR.1],
        "extrapolation": [EXTRAPOLATION.0, EXTRAPOLATION.1],
        "models": summary_models,
    }))?;
    std::fs::write(out_dir.join("extrapolation_summary.txt"), &summary_txt)?;
    std::fs::write(out_dir.join("extrapolation_summary.json"), summary_json)?;

    // Resolved configuration for replay.
    let mut run_cfg = RunConfig::default();
    run_cfg.data = DataSource::Toy;
    run_cfg.members = args.members;
    run_cfg.batch_size = args.batch_size;
    run_cfg.iterations = args.iterations;
    run_cfg.lr = args.lr;
    run_cfg.n_runs = args.n_runs;
    run_cfg.seed = args.seed;
    run_cfg.out = out_dir.clone();
    run_cfg.toy_n = args.n;
    run_cfg.write_into(&out_dir)?;

    print!("{table_txt}");
    print!("{summary_txt}");
    println!("toy bench artifacts in {}", out_dir.display());
    Ok(())
}
