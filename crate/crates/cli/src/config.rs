//! Run configuration: built-in defaults, overridden by a flat `key = value`
//! config file, overridden by command-line flags. Unknown keys are rejected.
//!
//! The resolved configuration is written into every run directory as
//! `run_config.txt` in the same format, so a finished run can be replayed
//! exactly with `train --config <run_dir>/run_config.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use soc_ensemble::nn::{Activation, LossKind};

/// Environment variable selecting the default output directory. Flags and
/// config files take precedence; nothing else is read from the environment.
pub const OUT_DIR_ENV: &str = "SOC_ENSEMBLE_OUT";

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Toy,
    Synthetic,
    Path(PathBuf),
}

impl DataSource {
    pub fn parse(s: &str) -> Self {
        match s {
            "toy" => DataSource::Toy,
            "synthetic" => DataSource::Synthetic,
            other => DataSource::Path(PathBuf::from(other)),
        }
    }

    fn render(&self) -> String {
        match self {
            DataSource::Toy => "toy".into(),
            DataSource::Synthetic => "synthetic".into(),
            DataSource::Path(p) => p.display().to_string(),
        }
    }
}

/// Everything a run needs. See the README for the file schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub loss: LossKind,
    pub members: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub split: f64,
    pub grid_search: bool,
    pub n_runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub include_soc_lag: bool,
    pub toy_n: usize,
    pub toy_x_min: f64,
    pub toy_x_max: f64,
    pub drive_duration_s: f64,
    pub sample_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let out = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        Self {
            data: DataSource::Toy,
            loss: LossKind::Nll,
            members: 5,
            batch_size: 100,
            iterations: 20_000,
            lr: 0.1,
            hidden: vec![50],
            activation: Activation::Relu,
            split: 0.8,
            grid_search: false,
            n_runs: 1,
            seed: 0,
            out,
            include_soc_lag: false,
            toy_n: 1000,
            toy_x_min: -3.0,
            toy_x_max: 3.0,
            drive_duration_s: 2400.0,
            sample_size: 100,
        }
    }
}

fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "nll" => Ok(LossKind::Nll),
        "mse" => Ok(LossKind::Mse),
        other => bail!("invalid loss '{other}' (expected nll or mse)"),
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => bail!("invalid activation '{other}' (expected relu or tanh)"),
    }
}

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid hidden layer width '{part}'"))
        })
        .collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("invalid boolean '{other}' for key '{key}'"),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .with_context(|| format!("invalid number '{v}' for key '{key}'"))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .with_context(|| format!("invalid integer '{v}' for key '{key}'"))
        };
        match key {
            "data" => self.data = DataSource::parse(value),
            "loss" => self.loss = parse_loss(value)?,
            "members" => self.members = int(value)?,
            "batch_size" => self.batch_size = int(value)?,
            "iterations" => self.iterations = int(value)?,
            "lr" => self.lr = num(value)?,
            "hidden" => self.hidden = parse_hidden(value)?,
            "activation" => self.activation = parse_activation(value)?,
            "split" => self.split = num(value)?,
            "grid_search" => self.grid_search = parse_bool(key, value)?,
            "n_runs" => self.n_runs = int(value)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .with_context(|| format!("invalid seed '{value}'"))?
            }
            "out" => self.out = PathBuf::from(value),
            "include_soc_lag" => self.include_soc_lag = parse_bool(key, value)?,
            "toy_n" => self.toy_n = int(value)?,
            "toy_x_min" => self.toy_x_min = num(value)?,
            "toy_x_max" => self.toy_x_max = num(value)?,
            "drive_duration_s" => self.drive_duration_s = num(value)?,
            "sample_size" => self.sample_size = int(value)?,
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Parses a flat config file: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    path.display(),
                    lineno + 1
                );
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    /// Canonical flat rendering, parseable by [`RunConfig::apply_file`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        let hidden = self
            .hidden
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let activation = match self.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        };
        let _ = writeln!(out, "data = {}", self.data.render());
        let _ = writeln!(out, "loss = {}", self.loss);
        let _ = writeln!(out, "members = {}", self.members);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "lr = {}", self.lr);
        let _ = writeln!(out, "hidden = {hidden}");
        let _ = writeln!(out, "activation = {activation}");
        let _ = writeln!(out, "split = {}", self.split);
        let _ = writeln!(out, "grid_search = {}", self.grid_search);
        let _ = writeln!(out, "n_runs = {}", self.n_runs);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "out = {}", self.out.display());
        let _ = writeln!(out, "include_soc_lag = {}", self.include_soc_lag);
        let _ = writeln!(out, "toy_n = {}", self.toy_n);
        let _ = writeln!(out, "toy_x_min = {}", self.toy_x_min);
        let _ = writeln!(out, "toy_x_max = {}", self.toy_x_max);
        let _ = writeln!(out, "drive_duration_s = {}", self.drive_duration_s);
        let _ = writeln!(out, "sample_size = {}", self.sample_size);
        out
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run_config.txt");
        std::fs::write(&path, self.render())
            .with_context(|| format!("cannot write {}", path.display()))
    }
}
