//! `train`: load/generate data, split, optionally grid-search the learning
//! rate, train an ensemble, and persist everything needed to reproduce it.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use soc_ensemble::data::split_regression;
use soc_ensemble::ensemble::{save_ensemble, train_ensemble, EnsembleConfig};
use soc_ensemble::eval::metrics_on;
use soc_ensemble::nn::{LayerSpec, LossKind};
use soc_ensemble::optim::{lr_grid_search, LrGrid};

use super::io::{head_for, load_source};
use crate::config::{DataSource, RunConfig};

/// Shortened per-candidate budget used by the learning-rate grid search.
const GRID_SEARCH_ITERATIONS: usize = 2000;

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// toy, synthetic, or a telemetry CSV path.
    #[arg(long)]
    pub data: Option<String>,
    /// nll or mse.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Comma-separated hidden layer widths, e.g. 50 or 64,32.
    #[arg(long)]
    pub hidden: Option<String>,
    /// relu or tanh.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub split: Option<f64>,
    /// Tune the learning rate on the training split before the full run.
    #[arg(long)]
    pub grid_search: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub include_soc_lag: Option<bool>,
    #[arg(long)]
    pub toy_n: Option<usize>,
    #[arg(long)]
    pub drive_duration_s: Option<f64>,
}

impl TrainArgs {
    /// defaults < config file < flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = &self.data {
            cfg.set("data", v)?;
        }
        if let Some(v) = &self.loss {
            cfg.set("loss", v)?;
        }
        if let Some(v) = self.members {
            cfg.members = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = &self.hidden {
            cfg.set("hidden", v)?;
        }
        if let Some(v) = &self.activation {
            cfg.set("activation", v)?;
        }
        if let Some(v) = self.split {
            cfg.split = v;
        }
        if let Some(v) = self.grid_search {
            cfg.grid_search = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.include_soc_lag {
            cfg.include_soc_lag = v;
        }
        if let Some(v) = self.toy_n {
            cfg.toy_n = v;
        }
        if let Some(v) = self.drive_duration_s {
            cfg.drive_duration_s = v;
        }
        Ok(cfg)
    }
}

fn ensemble_config(cfg: &RunConfig, input_dim: usize) -> EnsembleConfig {
    let layer_spec = LayerSpec {
        input_dim,
        hidden_dims: cfg.hidden.clone(),
        activation: cfg.activation,
        head: head_for(cfg.loss),
    };
    let mut ens = EnsembleConfig::new(layer_spec);
    ens.m_members = cfg.members;
    ens.batch_size = cfg.batch_size;
    ens.iterations = cfg.iterations;
    ens.lr = cfg.lr;
    ens.loss = cfg.loss;
    ens.base_seed = cfg.seed;
    ens
}

/// Scores one learning rate: a shortened training run on the chronologically
/// first 80% of the training split, scored on the remaining 20% (NLL for the
/// NLL loss, RMSE otherwise). The test split is never touched.
fn grid_search_lr(
    train: &soc_ensemble::data::RegressionData,
    base: &EnsembleConfig,
    log: &mut Vec<String>,
) -> Result<f64> {
    let (inner_train, inner_val) = split_regression(train, 0.8).map_err(soc_ensemble::Error::from)?;
    let grid = LrGrid::default();
    let mut scores = Vec::new();
    let score_fn = |lr: f64| -> f64 {
        let mut cfg = base.clone();
        cfg.lr = lr;
        cfg.iterations = GRID_SEARCH_ITERATIONS.min(base.iterations);
        match train_ensemble(&inner_train, &cfg)
            .map_err(soc_ensemble::eval::EvalError::from)
            .and_then(|out| metrics_on(&out.ensemble, &inner_val))
        {
            Ok((nll, rmse)) => match base.loss {
                LossKind::Nll => nll,
                LossKind::Mse => rmse,
            },
            Err(_) => f64::NAN, // disqualifies this candidate
        }
    };
    let chosen = lr_grid_search(
        &grid,
        |lr| {
            let s = score_fn(lr);
            scores.push((lr, s));
            s
        },
        true,
    )
    .map_err(soc_ensemble::Error::from)?;
    for (lr, s) in &scores {
        log.push(format!("grid_search: lr={lr} score={s}"));
    }
    log.push(format!("grid_search: chosen lr={chosen}"));
    Ok(chosen)
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.resolve()?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;

    let mut log = Vec::new();
    let (data, source_log) = load_source(&cfg)?;
    log.extend(source_log);

    let (train, test) = split_regression(&data, cfg.split).map_err(soc_ensemble::Error::from)?;
    log.push(format!(
        "split: train={} test={} fraction={}",
        train.len(),
        test.len(),
        cfg.split
    ));

    let mut ens_cfg = ensemble_config(&cfg, train.input_dim());
    if cfg.grid_search {
        ens_cfg.lr = grid_search_lr(&train, &ens_cfg, &mut log)?;
        cfg.lr = ens_cfg.lr;
        cfg.grid_search = false; // the resolved config replays without re-tuning
    }
    log.push(format!("effective lr = {}", ens_cfg.lr));

    let outcome = train_ensemble(&train, &ens_cfg).map_err(soc_ensemble::Error::from)?;
    for w in &outcome.warnings {
        log.push(format!("warning: {w}"));
    }
    for (i, trace) in outcome.traces.iter().enumerate() {
        log.push(format!(
            "member {i}: seed={} iterations={} first_loss={} final_loss={}",
            ens_cfg.member_seed(i),
            trace.len(),
            trace.first().unwrap(),
            trace.last().unwrap()
        ));
    }

    let ensemble_path = cfg.out.join("ensemble.json");
    save_ensemble(&ensemble_path, &outcome.ensemble).map_err(soc_ensemble::Error::from)?;
    log.push(format!("wrote ensemble to {}", ensemble_path.display()));

    // Machine-readable loss traces, one JSON object per line.
    let mut stream = String::new();
    for (member, trace) in outcome.traces.iter().enumerate() {
        for (iteration, loss) in trace.iter().enumerate() {
            let line = serde_json::json!({
                "member": member,
                "iteration": iteration,
                "loss": loss,
            });
            let _ = writeln!(stream, "{line}");
        }
    }
    std::fs::write(cfg.out.join("metrics.jsonl"), stream)?;

    std::fs::write(cfg.out.join("train_log.txt"), log.join("\n") + "\n")?;
    cfg.write_into(&cfg.out)?;

    println!(
        "trained {} member(s) on {} rows; artifacts in {}",
        ens_cfg.m_members,
        train.len(),
        cfg.out.display()
    );
    Ok(())
}
