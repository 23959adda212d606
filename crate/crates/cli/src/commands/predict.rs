//! `predict`: evaluate a saved ensemble on an input file, emitting one
//! `index,mu,sigma` row per input row in chronological order.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use soc_ensemble::ensemble::load_ensemble;

use super::io::load_regression_for;

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Saved ensemble (JSON).
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Input CSV whose columns match the ensemble's training schema.
    #[arg(long)]
    pub input: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let ensemble = load_ensemble(&args.ensemble).map_err(soc_ensemble::Error::from)?;
    let data = load_regression_for(&ensemble.scaler, &args.input)?;

    let mut out = String::from("index,mu,sigma\n");
    for (i, x) in data.xs.iter().enumerate() {
        let (mu, sigma2) = ensemble
            .predict_mean_variance(x)
            .map_err(soc_ensemble::Error::from)?;
        let _ = writeln!(out, "{i},{mu},{}", sigma2.sqrt());
    }
    std::fs::write(&args.out, out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("wrote {} predictions to {}", data.len(), args.out.display());
    Ok(())
}
