//! `evaluate`: metric report plus interval-series plot data for a saved
//! ensemble on a test file. With `--n-runs`, retrains from fresh seeds on a
//! provided training file and reports `mean ± std` aggregates.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use soc_ensemble::ensemble::load_ensemble;
use soc_ensemble::eval::{
    emit_interval_series, metrics_on, render_report_table, run_repeated, Aggregate,
    MetricReport, RepeatedTask, RunMetrics,
};

use super::io::{load_regression_for, model_kind_of};

/// Seed offset between repeated runs; keeps member seed ranges disjoint.
const RUN_SEED_STRIDE: u64 = 1000;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Saved ensemble (JSON).
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Test CSV whose columns match the ensemble's training schema.
    #[arg(long)]
    pub test: PathBuf,
    /// Training CSV, required with --n-runs >= 2.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Retrain/evaluate this many times and aggregate (mean ± std).
    #[arg(long)]
    pub n_runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Interval-series sample size (without replacement, clamped).
    #[arg(long, default_value_t = 100)]
    pub sample_size: usize,
    /// Seed for the interval-series sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label for the report; defaults to the test file stem.
    #[arg(long)]
    pub dataset_id: Option<String>,
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    let ensemble = load_ensemble(&args.ensemble).map_err(soc_ensemble::Error::from)?;
    let test = load_regression_for(&ensemble.scaler, &args.test)?;
    let dataset_id = args.dataset_id.clone().unwrap_or_else(|| {
        args.test
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "test".into())
    });
    let kind = model_kind_of(&ensemble);

    let report = match args.n_runs {
        None | Some(0) | Some(1) => {
            let (nll, rmse) = metrics_on(&ensemble, &test).map_err(soc_ensemble::Error::from)?;
            let per_run = vec![RunMetrics {
                run: 0,
                seed: ensemble.config.base_seed,
                nll,
                rmse,
            }];
            let aggregate = Aggregate::from_runs(&per_run);
            MetricReport {
                dataset_id,
                model_kind: kind,
                per_run,
                failed_runs: vec![],
                aggregate,
            }
        }
        Some(n) => {
            let Some(train_path) = &args.train else {
                bail!("--n-runs {n} requires --train <file> to retrain from fresh seeds");
            };
            let train = load_regression_for(&ensemble.scaler, train_path)?;
            let task = RepeatedTask {
                dataset_id,
                model_kind: kind,
                config: ensemble.config.clone(),
            };
            run_repeated(
                &train,
                &test,
                &task,
                n,
                ensemble.config.base_seed,
                RUN_SEED_STRIDE,
            )
            .map_err(soc_ensemble::Error::from)?
        }
    };

    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(args.out.join("report.json"), json)?;
    let table = render_report_table(std::slice::from_ref(&report));
    std::fs::write(args.out.join("report.txt"), &table)?;

    let series = emit_interval_series(&ensemble, &test, args.sample_size, args.seed)
        .map_err(soc_ensemble::Error::from)?;
    series
        .write_csv(&args.out.join("intervals.csv"))
        .map_err(soc_ensemble::Error::from)?;

    print!("{table}");
    println!(
        "wrote report.json, report.txt, intervals.csv to {}",
        args.out.display()
    );
    Ok(())
}
