//! `gen`: write toy or synthetic-drive dataset files.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Subcommand;
use soc_ensemble::data::{
    save_telemetry_csv, save_toy_csv, synthetic_drive_generate, toy_generate, DriveProfile,
};

#[derive(Debug, Subcommand)]
pub enum GenKind {
    /// Sinusoidal toy samples with two-branch Gaussian noise (columns
    /// x,y,y_true).
    Toy {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = -3.0)]
        x_min: f64,
        #[arg(long, default_value_t = 3.0)]
        x_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic drive-cycle telemetry at 0.1 s granularity.
    Drive {
        /// Trip length in seconds (>= 60).
        #[arg(long, default_value_t = 2400.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// mixed, zero-current, or constant:<amps>
        #[arg(long, default_value = "mixed")]
        profile: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_profile(s: &str) -> Result<DriveProfile> {
    match s {
        "mixed" => Ok(DriveProfile::Mixed),
        "zero-current" => Ok(DriveProfile::ZeroCurrent),
        other => {
            if let Some(amps) = other.strip_prefix("constant:") {
                let amps: f64 = amps
                    .parse()
                    .with_context(|| format!("invalid amps in profile '{other}'"))?;
                Ok(DriveProfile::ConstantCurrent { amps })
            } else {
                bail!("unknown profile '{other}' (mixed, zero-current, constant:<amps>)")
            }
        }
    }
}

pub fn run(kind: &GenKind) -> Result<()> {
    match kind {
        GenKind::Toy {
            n,
            seed,
            x_min,
            x_max,
            out,
        } => {
            let samples =
                toy_generate(*n, *x_min, *x_max, *seed).map_err(soc_ensemble::Error::from)?;
            save_toy_csv(out, &samples).map_err(soc_ensemble::Error::from)?;
            println!("wrote {} rows to {}", samples.len(), out.display());
        }
        GenKind::Drive {
            duration_s,
            seed,
            profile,
            out,
        } => {
            let profile = parse_profile(profile)?;
            let dataset = synthetic_drive_generate(*duration_s, *seed, profile)
                .map_err(soc_ensemble::Error::from)?;
            save_telemetry_csv(out, &dataset).map_err(soc_ensemble::Error::from)?;
            println!("wrote {} rows to {}", dataset.len(), out.display());
        }
    }
    Ok(())
}
