//! Shared loading helpers: turning config data sources and input files into
//! regression sets whose schema matches a trained model's scaler.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use soc_ensemble::data::{
    load_columns_csv, load_csv, load_toy_csv, synthetic_drive_generate, toy_generate,
    DataError, DriveProfile, RegressionData, ScalerStats, TELEMETRY_COLUMNS,
};
use soc_ensemble::ensemble::Ensemble;
use soc_ensemble::eval::ModelKind;
use soc_ensemble::nn::{Head, LossKind};

use crate::config::{DataSource, RunConfig};

/// Materializes the configured data source as a raw-unit regression set.
/// Returns the data plus a description line for the log.
pub fn load_source(cfg: &RunConfig) -> Result<(RegressionData, Vec<String>)> {
    let mut log = Vec::new();
    let data = match &cfg.data {
        DataSource::Toy => {
            let samples = toy_generate(cfg.toy_n, cfg.toy_x_min, cfg.toy_x_max, cfg.seed)
                .map_err(soc_ensemble::Error::from)?;
            log.push(format!(
                "data: toy n={} x=[{},{}] seed={}",
                cfg.toy_n, cfg.toy_x_min, cfg.toy_x_max, cfg.seed
            ));
            RegressionData::from_toy(&samples)
        }
        DataSource::Synthetic => {
            let dataset =
                synthetic_drive_generate(cfg.drive_duration_s, cfg.seed, DriveProfile::Mixed)
                    .map_err(soc_ensemble::Error::from)?;
            log.push(format!(
                "data: synthetic duration_s={} seed={} rows={}",
                cfg.drive_duration_s,
                cfg.seed,
                dataset.len()
            ));
            dataset.to_regression(cfg.include_soc_lag)
        }
        DataSource::Path(path) => {
            let (dataset, report) = load_csv(path).map_err(soc_ensemble::Error::from)?;
            log.push(format!("data: csv {} rows={}", path.display(), dataset.len()));
            log.push(format!(
                "validation: rows_read={} kept={} rejected_parse={} rejected_non_finite={} rejected_range={}",
                report.rows_read,
                report.rows_kept,
                report.rejected_parse,
                report.rejected_non_finite,
                report.rejected_range
            ));
            dataset.to_regression(cfg.include_soc_lag)
        }
    };
    Ok((data, log))
}

fn is_telemetry_header(header: &[String]) -> bool {
    header.len() == TELEMETRY_COLUMNS.len()
        && TELEMETRY_COLUMNS
            .iter()
            .all(|c| header.iter().any(|h| h == c))
}

/// Loads an input file so its columns line up with the scaler the model was
/// trained with. Telemetry-interface files go through full validation; other
/// files are matched column-by-column against the scaler's feature names and
/// target name, erroring on the first missing column.
pub fn load_regression_for(scaler: &ScalerStats, path: &Path) -> Result<RegressionData> {
    let uses_lag = scaler.feature_names.iter().any(|f| f == "soc_pct_lag1");
    if scaler.feature_names == ["x"] && scaler.target_name == "y" {
        let samples = load_toy_csv(path).map_err(soc_ensemble::Error::from)?;
        return Ok(RegressionData::from_toy(&samples));
    }

    let (header, columns) = load_columns_csv(path).map_err(soc_ensemble::Error::from)?;
    if is_telemetry_header(&header) {
        let (dataset, _) = load_csv(path).map_err(soc_ensemble::Error::from)?;
        let reg = dataset.to_regression(uses_lag);
        if reg.feature_names != scaler.feature_names {
            bail!(
                "input {} provides features {:?} but the model expects {:?}",
                path.display(),
                reg.feature_names,
                scaler.feature_names
            );
        }
        return Ok(reg);
    }

    // Generic column selection by name.
    let pick = |name: &str| -> Result<&Vec<f64>> {
        header
            .iter()
            .position(|h| h == name)
            .map(|i| &columns[i])
            .ok_or_else(|| {
                anyhow!(soc_ensemble::Error::from(DataError::MissingColumn(
                    name.to_string()
                )))
            })
            .with_context(|| format!("input {}", path.display()))
    };
    let feature_cols: Vec<&Vec<f64>> = scaler
        .feature_names
        .iter()
        .map(|n| pick(n))
        .collect::<Result<_>>()?;
    let target_col = pick(&scaler.target_name)?;
    let n = target_col.len();
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| feature_cols.iter().map(|c| c[i]).collect())
        .collect();
    Ok(RegressionData {
        feature_names: scaler.feature_names.clone(),
        target_name: scaler.target_name.clone(),
        xs,
        ys: target_col.clone(),
    })
}

/// Which of the four comparison variants a saved ensemble is.
pub fn model_kind_of(ensemble: &Ensemble) -> ModelKind {
    let single = ensemble.config.m_members == 1;
    match (ensemble.config.loss, single) {
        (LossKind::Nll, false) => ModelKind::EnsembleNll,
        (LossKind::Nll, true) => ModelKind::SingleNll,
        (LossKind::Mse, false) => ModelKind::EnsembleMse,
        (LossKind::Mse, true) => ModelKind::SingleMse,
    }
}

/// Head implied by a training loss.
pub fn head_for(loss: LossKind) -> Head {
    match loss {
        LossKind::Nll => Head::Gaussian,
        LossKind::Mse => Head::MeanOnly,
    }
}
