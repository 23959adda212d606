//! Telemetry ingestion, standardization, chronological splitting, and the
//! synthetic data generators used for benchmarks.
//!
//! Input CSV schema (exact header names, any column order):
//! `t, speed_mph, battery_power_hp, battery_current_a, battery_voltage_v,
//! batt_temp1_c, batt_temp2_c, batt_temp3_c, fan_pct, soc_pct`.
//! Timestamps are seconds at 0.1 s granularity and must be strictly
//! increasing. `soc_pct` is the prediction target.

mod synthetic;

pub use synthetic::{synthetic_drive_generate, DriveProfile, BATTERY_CAPACITY_AH, VOLTAGE_CEILING_V};

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("file error for {path}: {message}")]
    File { path: String, message: String },
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("unexpected column '{0}' in header")]
    UnexpectedColumn(String),
    #[error("timestamps not strictly increasing at data row {row} (t = {t})")]
    NonMonotoneTimestamps { row: usize, t: f64 },
    #[error("dataset is empty after validation")]
    EmptyAfterValidation,
    #[error("dataset too small: {got} records, need at least {need}")]
    TooSmall { got: usize, need: usize },
    #[error("split fraction must be in (0, 1), got {0}")]
    InvalidSplitFraction(f64),
    #[error("split produced an empty train or test part")]
    DegenerateSplit,
    #[error("constant column '{0}' cannot be standardized")]
    ConstantColumn(String),
    #[error("scaler expects features {expected:?}, got {got:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("invalid range: min {min} must be below max {max}")]
    InvalidRange { min: f64, max: f64 },
    #[error("grid step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("sample count must be >= 1")]
    EmptyRequest,
    #[error("synthetic duration must be >= 60 s, got {0}")]
    DurationTooShort(f64),
}

/// Exact header of the telemetry CSV interface, in canonical order.
pub const TELEMETRY_COLUMNS: [&str; 10] = [
    "t",
    "speed_mph",
    "battery_power_hp",
    "battery_current_a",
    "battery_voltage_v",
    "batt_temp1_c",
    "batt_temp2_c",
    "batt_temp3_c",
    "fan_pct",
    "soc_pct",
];

/// Name of the prediction target column.
pub const TARGET_COLUMN: &str = "soc_pct";

/// One timestamped row of the nine on-board attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub speed_mph: f64,
    pub battery_power_hp: f64,
    pub battery_current_a: f64,
    pub battery_voltage_v: f64,
    pub batt_temp1_c: f64,
    pub batt_temp2_c: f64,
    pub batt_temp3_c: f64,
    pub fan_pct: f64,
    pub soc_pct: f64,
}

impl TelemetryRecord {
    /// Values in canonical column order (matching [`TELEMETRY_COLUMNS`]).
    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.speed_mph,
            self.battery_power_hp,
            self.battery_current_a,
            self.battery_voltage_v,
            self.batt_temp1_c,
            self.batt_temp2_c,
            self.batt_temp3_c,
            self.fan_pct,
            self.soc_pct,
        ]
    }

    fn from_values(v: &[f64; 10]) -> Self {
        Self {
            t: v[0],
            speed_mph: v[1],
            battery_power_hp: v[2],
            battery_current_a: v[3],
            battery_voltage_v: v[4],
            batt_temp1_c: v[5],
            batt_temp2_c: v[6],
            batt_temp3_c: v[7],
            fan_pct: v[8],
            soc_pct: v[9],
        }
    }

    fn range_ok(&self) -> bool {
        (0.0..=100.0).contains(&self.soc_pct) && (0.0..=100.0).contains(&self.fan_pct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Csv,
    Toy,
    Synthetic,
}

/// A validated, chronologically ordered telemetry dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<TelemetryRecord>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub provenance: Provenance,
}

/// Counts of rows dropped during CSV validation, by reason.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rejected_parse: usize,
    pub rejected_non_finite: usize,
    pub rejected_range: usize,
}

impl ValidationReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected_parse + self.rejected_non_finite + self.rejected_range
    }
}

/// Default feature set: every telemetry column except the timestamp and the
/// target. The current SOC is excluded from inputs to avoid target leakage;
/// [`Dataset::to_regression`] can re-add it as a one-step lag.
pub fn default_feature_names() -> Vec<String> {
    TELEMETRY_COLUMNS
        .iter()
        .filter(|&&c| c != "t" && c != TARGET_COLUMN)
        .map(|&c| c.to_string())
        .collect()
}

impl Dataset {
    pub fn new(records: Vec<TelemetryRecord>, provenance: Provenance) -> Self {
        Self {
            records,
            feature_names: default_feature_names(),
            target_name: TARGET_COLUMN.to_string(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Extracts the design matrix and target vector.
    ///
    /// With `include_soc_lag` the previous record's SOC is appended as the
    /// feature `soc_pct_lag1` and the first record is dropped (it has no
    /// predecessor).
    pub fn to_regression(&self, include_soc_lag: bool) -> RegressionData {
        let mut feature_names = self.feature_names.clone();
        if include_soc_lag {
            feature_names.push("soc_pct_lag1".to_string());
        }
        let start = usize::from(include_soc_lag);
        let mut xs = Vec::with_capacity(self.records.len().saturating_sub(start));
        let mut ys = Vec::with_capacity(xs.capacity());
        for (i, rec) in self.records.iter().enumerate().skip(start) {
            let mut row = vec![
                rec.speed_mph,
                rec.battery_power_hp,
                rec.battery_current_a,
                rec.battery_voltage_v,
                rec.batt_temp1_c,
                rec.batt_temp2_c,
                rec.batt_temp3_c,
                rec.fan_pct,
            ];
            if include_soc_lag {
                row.push(self.records[i - 1].soc_pct);
            }
            xs.push(row);
            ys.push(rec.soc_pct);
        }
        RegressionData {
            feature_names,
            target_name: self.target_name.clone(),
            xs,
            ys,
        }
    }
}

/// Feature matrix plus target vector in raw units, row order preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Single-feature regression view of toy samples: x predicts the noisy y.
    pub fn from_toy(samples: &[ToySample]) -> Self {
        Self {
            feature_names: vec!["x".to_string()],
            target_name: "y".to_string(),
            xs: samples.iter().map(|s| vec![s.x]).collect(),
            ys: samples.iter().map(|s| s.y).collect(),
        }
    }
}

/// A standardized copy of a training set (z-scored features and target).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedSet {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl StandardizedSet {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }
}

/// Per-feature and target mean/std fitted on a training split.
/// Standard deviations use the population convention and must be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub n_fit_rows: usize,
    /// Set by [`fit_scaler`]; training refuses stats that did not come from a
    /// train split.
    pub fitted_on_train: bool,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Fits z-score statistics on a training split. Constant columns are
/// rejected by name.
pub fn fit_scaler(train: &RegressionData) -> Result<ScalerStats, DataError> {
    if train.is_empty() {
        return Err(DataError::EmptyAfterValidation);
    }
    let n = train.len();
    let mut feature_means = Vec::with_capacity(train.input_dim());
    let mut feature_stds = Vec::with_capacity(train.input_dim());
    for (j, name) in train.feature_names.iter().enumerate() {
        let (mean, std) = mean_std(train.xs.iter().map(move |row| row[j]), n);
        if std == 0.0 {
            return Err(DataError::ConstantColumn(name.clone()));
        }
        feature_means.push(mean);
        feature_stds.push(std);
    }
    let (target_mean, target_std) = mean_std(train.ys.iter().copied(), n);
    if target_std == 0.0 {
        return Err(DataError::ConstantColumn(train.target_name.clone()));
    }
    Ok(ScalerStats {
        feature_names: train.feature_names.clone(),
        target_name: train.target_name.clone(),
        feature_means,
        feature_stds,
        target_mean,
        target_std,
        n_fit_rows: n,
        fitted_on_train: true,
    })
}

impl ScalerStats {
    /// z-scores one feature vector.
    pub fn apply_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Inverts [`ScalerStats::apply_features`].
    pub fn invert_features(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn invert_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    /// Maps a variance from standardized to raw target units.
    pub fn invert_target_variance(&self, sigma2: f64) -> f64 {
        sigma2 * self.target_std * self.target_std
    }
}

/// Standardizes a whole regression set with already-fitted statistics.
/// Values outside the fitted range are fine; only the schema must match.
pub fn apply_scaler(
    stats: &ScalerStats,
    data: &RegressionData,
) -> Result<StandardizedSet, DataError> {
    if stats.feature_names != data.feature_names {
        return Err(DataError::FeatureMismatch {
            expected: stats.feature_names.clone(),
            got: data.feature_names.clone(),
        });
    }
    Ok(StandardizedSet {
        xs: data.xs.iter().map(|row| stats.apply_features(row)).collect(),
        ys: data.ys.iter().map(|&y| stats.apply_target(y)).collect(),
    })
}

/// Splits ordered records into the first `floor(train_frac * n)` for
/// training and the chronological remainder for testing. No shuffling.
pub fn split_chrono<T: Clone>(
    records: &[T],
    train_frac: f64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DataError::InvalidSplitFraction(train_frac));
    }
    if records.len() < 10 {
        return Err(DataError::TooSmall {
            got: records.len(),
            need: 10,
        });
    }
    let n_train = (train_frac * records.len() as f64).floor() as usize;
    if n_train == 0 || n_train == records.len() {
        return Err(DataError::DegenerateSplit);
    }
    Ok((records[..n_train].to_vec(), records[n_train..].to_vec()))
}

/// [`split_chrono`] for a design matrix: splits rows, keeps schema.
pub fn split_regression(
    data: &RegressionData,
    train_frac: f64,
) -> Result<(RegressionData, RegressionData), DataError> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let (train_idx, test_idx) = split_chrono(&indices, train_frac)?;
    let take = |idx: &[usize]| RegressionData {
        feature_names: data.feature_names.clone(),
        target_name: data.target_name.clone(),
        xs: idx.iter().map(|&i| data.xs[i].clone()).collect(),
        ys: idx.iter().map(|&i| data.ys[i]).collect(),
    };
    Ok((take(&train_idx), take(&test_idx)))
}

/// Draws `batch_size` indices uniformly with replacement from `[0, n)`,
/// consuming the caller's RNG stream deterministically.
pub fn make_batch<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<usize> {
    assert!(n > 0, "cannot sample batches from an empty training set");
    (0..batch_size).map(|_| rng.random_range(0..n)).collect()
}

/// One sample of the sinusoidal toy task: `y = 10 sin(x) + noise`, where the
/// noise is N(0, 9) for `x <= 0` and N(0, 1) for `x > 0`. `y_true` is the
/// noiseless `10 sin(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySample {
    pub x: f64,
    pub y: f64,
    pub y_true: f64,
}

/// Generates `n` toy samples with x uniform on `[x_min, x_max)`.
pub fn toy_generate(
    n: usize,
    x_min: f64,
    x_max: f64,
    seed: u64,
) -> Result<Vec<ToySample>, DataError> {
    if n == 0 {
        return Err(DataError::EmptyRequest);
    }
    if !(x_min < x_max) {
        return Err(DataError::InvalidRange { min: x_min, max: x_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let x = rng.random_range(x_min..x_max);
            let z: f64 = rng.sample(StandardNormal);
            let noise_std = if x <= 0.0 { 3.0 } else { 1.0 };
            let y_true = 10.0 * x.sin();
            ToySample {
                x,
                y: y_true + noise_std * z,
                y_true,
            }
        })
        .collect())
}

/// Inclusive evenly spaced evaluation grid. The step is rounded to the
/// nearest value that divides the range evenly so both endpoints are always
/// included exactly.
pub fn toy_eval_grid(x_min: f64, x_max: f64, step: f64) -> Result<Vec<f64>, DataError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(DataError::InvalidStep(step));
    }
    if !(x_min < x_max) {
        return Err(DataError::InvalidRange { min: x_min, max: x_max });
    }
    let range = x_max - x_min;
    let n_intervals = ((range / step).round() as usize).max(1);
    Ok((0..=n_intervals)
        .map(|i| {
            if i == n_intervals {
                x_max
            } else {
                x_min + range * i as f64 / n_intervals as f64
            }
        })
        .collect())
}

fn format_value(v: f64) -> String {
    // Shortest round-trip representation; parsing the text recovers the bits.
    format!("{v}")
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes a telemetry dataset in the exact interface format: canonical
/// header order, timestamps with one decimal, all other values in shortest
/// round-trip form.
pub fn save_telemetry_csv(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let mut out = String::new();
    out.push_str(&TELEMETRY_COLUMNS.join(","));
    out.push('\n');
    for rec in &dataset.records {
        let v = rec.values();
        let _ = write!(out, "{:.1}", v[0]);
        for value in &v[1..] {
            let _ = write!(out, ",{}", format_value(*value));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Loads and validates a telemetry CSV.
///
/// Rows with unparseable, non-finite, or out-of-range values are dropped and
/// counted in the [`ValidationReport`]; non-monotone timestamps among the
/// kept rows are a hard error naming the first offending data row (1-based).
pub fn load_csv(path: &Path) -> Result<(Dataset, ValidationReport), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| file_err(path, e))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| file_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for expected in TELEMETRY_COLUMNS {
        if !headers.iter().any(|h| h == expected) {
            return Err(DataError::MissingColumn(expected.to_string()));
        }
    }
    if let Some(extra) = headers.iter().find(|h| !TELEMETRY_COLUMNS.contains(&h.as_str())) {
        return Err(DataError::UnexpectedColumn(extra.clone()));
    }
    let positions: Vec<usize> = TELEMETRY_COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == c).expect("checked above"))
        .collect();

    let mut report = ValidationReport::default();
    let mut records = Vec::new();
    let mut row_numbers = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| file_err(path, e))?;
        report.rows_read += 1;
        let mut values = [0.0; 10];
        let mut parse_ok = true;
        for (slot, &pos) in values.iter_mut().zip(&positions) {
            match row.get(pos).map(|s| s.trim().parse::<f64>()) {
                Some(Ok(v)) => *slot = v,
                _ => {
                    parse_ok = false;
                    break;
                }
            }
        }
        if !parse_ok {
            report.rejected_parse += 1;
            continue;
        }
        if values.iter().any(|v| !v.is_finite()) {
            report.rejected_non_finite += 1;
            continue;
        }
        let rec = TelemetryRecord::from_values(&values);
        if !rec.range_ok() {
            report.rejected_range += 1;
            continue;
        }
        records.push(rec);
        row_numbers.push(row_idx + 1);
    }
    report.rows_kept = records.len();

    if records.is_empty() {
        return Err(DataError::EmptyAfterValidation);
    }
    for i in 1..records.len() {
        if records[i].t <= records[i - 1].t {
            return Err(DataError::NonMonotoneTimestamps {
                row: row_numbers[i],
                t: records[i].t,
            });
        }
    }

    Ok((Dataset::new(records, Provenance::Csv), report))
}

/// Writes toy samples as `x,y,y_true`.
pub fn save_toy_csv(path: &Path, samples: &[ToySample]) -> Result<(), DataError> {
    let mut out = String::from("x,y,y_true\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_value(s.x),
            format_value(s.y),
            format_value(s.y_true)
        );
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Loads a toy dataset file (`x,y,y_true`).
pub fn load_toy_csv(path: &Path) -> Result<Vec<ToySample>, DataError> {
    let (header, columns) = load_columns_csv(path)?;
    for expected in ["x", "y", "y_true"] {
        if !header.iter().any(|h| h == expected) {
            return Err(DataError::MissingColumn(expected.to_string()));
        }
    }
    let col = |name: &str| &columns[header.iter().position(|h| h == name).unwrap()];
    let (xs, ys, yt) = (col("x"), col("y"), col("y_true"));
    Ok(xs
        .iter()
        .zip(ys.iter().zip(yt))
        .map(|(&x, (&y, &y_true))| ToySample { x, y, y_true })
        .collect())
}

/// Generic numeric CSV reader: returns the header and one `f64` column per
/// header entry. Used to select feature columns by name at prediction time.
pub fn load_columns_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| file_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| file_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| file_err(path, e))?;
        for (j, col) in columns.iter_mut().enumerate() {
            let field = row.get(j).unwrap_or("");
            let v = field.trim().parse::<f64>().map_err(|_| DataError::File {
                path: path.display().to_string(),
                message: format!(
                    "unparseable value '{field}' at data row {}, column '{}'",
                    row_idx + 1,
                    header[j]
                ),
            })?;
            col.push(v);
        }
    }
    Ok((header, columns))
}
