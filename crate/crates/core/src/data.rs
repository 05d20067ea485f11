//! Dataset construction: synthetic benchmark generators, delay-equation
//! integration, lag embedding, noise injection, normalization, CSV I/O, and
//! train/test splitting.
//!
//! All randomized operations take an explicit seed and are deterministic
//! under it.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A supervised regression table: one input row per target value.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// N x n input matrix.
    pub inputs: DMatrix<f64>,
    /// N targets.
    pub targets: DVector<f64>,
    /// Present when the table holds normalized values; maps back to original units.
    pub normalization: Option<Normalization>,
}

/// Affine map of one column: `normalized = (raw - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub offset: f64,
    pub scale: f64,
}

impl ColumnScale {
    pub const IDENTITY: ColumnScale = ColumnScale { offset: 0.0, scale: 1.0 };

    pub fn forward(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    pub fn inverse(&self, normalized: f64) -> f64 {
        normalized * self.scale + self.offset
    }
}

/// Normalization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Map each column's observed [min, max] to [0, 1].
    MinMax01,
    /// Center by mean, divide by population standard deviation.
    ZScore,
    /// Identity mapping.
    None,
}

/// Fitted per-column scaling, including the target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mode: NormMode,
    pub inputs: Vec<ColumnScale>,
    pub target: ColumnScale,
}

impl Normalization {
    /// Fits column statistics on `ds` (call on training data only).
    pub fn fit(ds: &Dataset, mode: NormMode) -> Result<Normalization> {
        let n = ds.inputs.ncols();
        let mut inputs = Vec::with_capacity(n);
        for c in 0..n {
            inputs.push(fit_column(ds.inputs.column(c).iter().copied(), mode, c)?);
        }
        // Column index n denotes the target in error reports.
        let target = fit_column(ds.targets.iter().copied(), mode, n)?;
        Ok(Normalization { mode, inputs, target })
    }

    /// Applies the fitted scaling and stamps the metadata onto the result.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.inputs.ncols() != self.inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.len(),
                actual: ds.inputs.ncols(),
                what: "normalization columns",
            });
        }
        let mut inputs = ds.inputs.clone();
        for c in 0..inputs.ncols() {
            let s = self.inputs[c];
            for r in 0..inputs.nrows() {
                inputs[(r, c)] = s.forward(inputs[(r, c)]);
            }
        }
        let targets = ds.targets.map(|v| self.target.forward(v));
        Ok(Dataset { inputs, targets, normalization: Some(self.clone()) })
    }

    /// Maps normalized predictions back to original target units.
    pub fn invert_targets(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| self.target.inverse(v))
    }
}

fn fit_column<I: Iterator<Item = f64>>(values: I, mode: NormMode, column: usize) -> Result<ColumnScale> {
    let v: Vec<f64> = values.collect();
    match mode {
        NormMode::None => Ok(ColumnScale::IDENTITY),
        NormMode::MinMax01 => {
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // NaN data must not produce a NaN scale.
            if max.is_nan() || min.is_nan() || max <= min {
                return Err(Error::ConstantColumn { column });
            }
            Ok(ColumnScale { offset: min, scale: max - min })
        }
        NormMode::ZScore => {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std == 0.0 {
                return Err(Error::ConstantColumn { column });
            }
            Ok(ColumnScale { offset: mean, scale: std })
        }
    }
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Dataset> {
        if inputs.nrows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                actual: targets.len(),
                what: "target rows",
            });
        }
        Ok(Dataset { inputs, targets, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.len() == 0
    }

    /// Input dimensionality n.
    pub fn dims(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        DVector::from_fn(self.inputs.ncols(), |c, _| self.inputs[(i, c)])
    }

    /// Copies `count` consecutive rows starting at `start`.
    pub fn rows_range(&self, start: usize, count: usize) -> Result<Dataset> {
        if start + count > self.len() {
            return Err(Error::Config(format!(
                "row range {}..{} exceeds dataset of {} rows",
                start,
                start + count,
                self.len()
            )));
        }
        let inputs = DMatrix::from_fn(count, self.dims(), |r, c| self.inputs[(start + r, c)]);
        let targets = DVector::from_fn(count, |r, _| self.targets[start + r]);
        Ok(Dataset { inputs, targets, normalization: self.normalization.clone() })
    }

    fn take_rows(&self, idx: &[usize]) -> Dataset {
        let inputs = DMatrix::from_fn(idx.len(), self.dims(), |r, c| self.inputs[(idx[r], c)]);
        let targets = DVector::from_fn(idx.len(), |r, _| self.targets[idx[r]]);
        Dataset { inputs, targets, normalization: self.normalization.clone() }
    }

    /// Temporal split: first `count` rows, then the rest.
    pub fn split_at(&self, count: usize) -> Result<(Dataset, Dataset)> {
        if count == 0 || count >= self.len() {
            return Err(Error::Config(format!(
                "split point {count} must be inside 1..{}",
                self.len()
            )));
        }
        Ok((self.rows_range(0, count)?, self.rows_range(count, self.len() - count)?))
    }

    /// Random split: a seeded shuffle assigns the first `train` rows to the
    /// first returned dataset.
    pub fn split_shuffled(&self, train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if train == 0 || train >= self.len() {
            return Err(Error::Config(format!(
                "train size {train} must be inside 1..{}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        Ok((self.take_rows(&idx[..train]), self.take_rows(&idx[train..])))
    }
}

const HUMP1_SHAPE: [[f64; 2]; 2] = [[-4.5721, -2.1415], [-0.3855, 0.8230]];
const HUMP2_SHAPE: [[f64; 2]; 2] = [[-2.4801, 0.8700], [-0.3149, 0.8976]];
const HUMP1_CENTER: [f64; 2] = [-0.7, 1.3];
const HUMP2_CENTER: [f64; 2] = [1.2, -0.6];

/// The correlated two-hump surface: two rotated exponential bumps of heights
/// 10 and 8 centered at (-0.7, 1.3) and (1.2, -0.6). Fractional powers act on
/// `|z|` so the surface is real over the whole plane.
pub fn two_hump_value(x1: f64, x2: f64) -> f64 {
    let a1 = Matrix2::new(HUMP1_SHAPE[0][0], HUMP1_SHAPE[0][1], HUMP1_SHAPE[1][0], HUMP1_SHAPE[1][1]);
    let a2 = Matrix2::new(HUMP2_SHAPE[0][0], HUMP2_SHAPE[0][1], HUMP2_SHAPE[1][0], HUMP2_SHAPE[1][1]);
    let z1 = a1 * Vector2::new(x1 - HUMP1_CENTER[0], x2 - HUMP1_CENTER[1]);
    let z2 = a2 * Vector2::new(x1 - HUMP2_CENTER[0], x2 - HUMP2_CENTER[1]);
    10.0 * (-(z1[0].abs().powf(0.6) + z1[1].abs().powf(0.8))).exp()
        + 8.0 * (-(z2[0].abs().powi(6) + z2[1].abs().powi(4))).exp()
}

/// True centers of the two humps, for diagnostics.
pub fn two_hump_centers() -> [[f64; 2]; 2] {
    [HUMP1_CENTER, HUMP2_CENTER]
}

/// Samples the two-hump surface at `count` points drawn uniformly from
/// [-2, 3]^2.
pub fn synthetic_two_hump(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = DMatrix::zeros(count, 2);
    let mut targets = DVector::zeros(count);
    for r in 0..count {
        let x1 = rng.gen_range(-2.0..=3.0);
        let x2 = rng.gen_range(-2.0..=3.0);
        inputs[(r, 0)] = x1;
        inputs[(r, 1)] = x2;
        targets[r] = two_hump_value(x1, x2);
    }
    Dataset { inputs, targets, normalization: None }
}

/// Integrates the chaotic delay equation
/// `dx/dt = 0.2 x(t-tau) / (1 + x(t-tau)^10) - 0.1 x(t)`
/// with fourth-order Runge-Kutta at internal step `dt` and history
/// `x(t) = x0` for `t <= 0`. Delayed lookups between grid nodes use cubic
/// Hermite interpolation of the stored trajectory (values plus node slopes);
/// linear interpolation caps the scheme at second order and fails the
/// step-halving convergence guard. Returns values at integer times
/// `0..=t_end`.
pub fn mackey_glass(x0: f64, tau: f64, t_end: usize, dt: f64) -> Result<Vec<f64>> {
    if tau.is_nan() || tau <= 16.5 {
        return Err(Error::Config(format!("delay tau must exceed 16.5 for the chaotic regime, got {tau}")));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Config(format!("integration step must be positive, got {dt}")));
    }
    let per_unit = (1.0 / dt).round();
    if per_unit < 1.0 || (per_unit * dt - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("integration step {dt} must evenly divide 1")));
    }
    if dt > tau {
        return Err(Error::Config(format!("integration step {dt} must not exceed the delay {tau}")));
    }
    let per_unit = per_unit as usize;
    let total_steps = t_end * per_unit;

    let mut traj = Vec::with_capacity(total_steps + 1);
    let mut slopes: Vec<f64> = Vec::with_capacity(total_steps + 1);
    traj.push(x0);
    // Delayed lookup: constant pre-history, exact node values on the grid,
    // cubic Hermite inside a segment whose right-node slope is known, else
    // linear (only reachable when tau is within one step of the frontier).
    let delayed = |traj: &[f64], slopes: &[f64], t: f64| -> f64 {
        let td = t - tau;
        if td <= 0.0 {
            return x0;
        }
        let pos = td / dt;
        let i = pos.floor() as usize;
        let s = pos - i as f64;
        if i + 1 >= traj.len() {
            return traj[traj.len() - 1];
        }
        if s == 0.0 {
            return traj[i];
        }
        if i + 1 < slopes.len() {
            let (x0n, x1n) = (traj[i], traj[i + 1]);
            let (f0, f1) = (slopes[i], slopes[i + 1]);
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * x0n
                + (s3 - 2.0 * s2 + s) * dt * f0
                + (-2.0 * s3 + 3.0 * s2) * x1n
                + (s3 - s2) * dt * f1
        } else {
            traj[i] * (1.0 - s) + traj[i + 1] * s
        }
    };
    let slope = |x: f64, xd: f64| 0.2 * xd / (1.0 + xd.powi(10)) - 0.1 * x;
    for k in 0..total_steps {
        let t = k as f64 * dt;
        let x = traj[k];
        let k1 = slope(x, delayed(&traj, &slopes, t));
        slopes.push(k1);
        let k2 = slope(x + 0.5 * dt * k1, delayed(&traj, &slopes, t + 0.5 * dt));
        let k3 = slope(x + 0.5 * dt * k2, delayed(&traj, &slopes, t + 0.5 * dt));
        let k4 = slope(x + dt * k3, delayed(&traj, &slopes, t + dt));
        traj.push(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    Ok((0..=t_end).map(|t| traj[t * per_unit]).collect())
}

/// Lag structure for embedding a single series: row at time t has inputs
/// `s[t - lag]` (in listed lag order) and target `s[t + horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub lags: Vec<usize>,
    pub horizon: usize,
}

/// Lag structure over several aligned series: each input is
/// `series[idx][t - lag]`, the target is `series[target][t + horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeriesSpec {
    /// (series index, lag) per input column, in column order.
    pub inputs: Vec<(usize, usize)>,
    pub target: usize,
    pub horizon: usize,
}

/// Embeds one series into a regression table per `spec`. Rows cover every
/// admissible time index, oldest first.
pub fn lag_embed(series: &[f64], spec: &SeriesSpec) -> Result<Dataset> {
    if spec.lags.is_empty() {
        return Err(Error::Config("lag embedding needs at least one lag".into()));
    }
    let max_lag = *spec.lags.iter().max().unwrap();
    let needed = max_lag + spec.horizon + 1;
    if series.len() < needed {
        return Err(Error::Config(format!(
            "series of length {} too short for max lag {} and horizon {}",
            series.len(),
            max_lag,
            spec.horizon
        )));
    }
    let rows = series.len() - max_lag - spec.horizon;
    let mut inputs = DMatrix::zeros(rows, spec.lags.len());
    let mut targets = DVector::zeros(rows);
    for r in 0..rows {
        let t = max_lag + r;
        for (c, &lag) in spec.lags.iter().enumerate() {
            inputs[(r, c)] = series[t - lag];
        }
        targets[r] = series[t + spec.horizon];
    }
    Ok(Dataset { inputs, targets, normalization: None })
}

/// Embeds several aligned series into one regression table per `spec`.
pub fn lag_embed_multi(series: &[Vec<f64>], spec: &MultiSeriesSpec) -> Result<Dataset> {
    if spec.inputs.is_empty() {
        return Err(Error::Config("lag embedding needs at least one input column".into()));
    }
    let len = series.first().map(|s| s.len()).unwrap_or(0);
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Config("all series must have equal length".into()));
    }
    for &(idx, _) in spec.inputs.iter().chain(std::iter::once(&(spec.target, 0))) {
        if idx >= series.len() {
            return Err(Error::Config(format!("series index {idx} out of range ({} series)", series.len())));
        }
    }
    let max_lag = spec.inputs.iter().map(|&(_, lag)| lag).max().unwrap();
    let needed = max_lag + spec.horizon + 1;
    if len < needed {
        return Err(Error::Config(format!(
            "series of length {len} too short for max lag {max_lag} and horizon {}",
            spec.horizon
        )));
    }
    let rows = len - max_lag - spec.horizon;
    let mut inputs = DMatrix::zeros(rows, spec.inputs.len());
    let mut targets = DVector::zeros(rows);
    for r in 0..rows {
        let t = max_lag + r;
        for (c, &(idx, lag)) in spec.inputs.iter().enumerate() {
            inputs[(r, c)] = series[idx][t - lag];
        }
        targets[r] = series[spec.target][t + spec.horizon];
    }
    Ok(Dataset { inputs, targets, normalization: None })
}

/// Which dataset columns receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    Inputs,
    Targets,
    Both,
}

fn check_std(std: f64) -> Result<()> {
    if std < 0.0 || !std.is_finite() {
        return Err(Error::Domain(format!("noise standard deviation must be >= 0, got {std}")));
    }
    Ok(())
}

/// Adds seeded zero-mean Gaussian noise to a series. `std = 0` returns the
/// series bit-for-bit unchanged.
pub fn add_noise_series(series: &[f64], std: f64, seed: u64) -> Result<Vec<f64>> {
    check_std(std)?;
    if std == 0.0 {
        return Ok(series.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("std checked finite and positive");
    Ok(series.iter().map(|&v| v + normal.sample(&mut rng)).collect())
}

/// Adds seeded zero-mean Gaussian noise to the selected columns of a dataset.
pub fn add_noise_dataset(ds: &Dataset, std: f64, seed: u64, scope: NoiseScope) -> Result<Dataset> {
    check_std(std)?;
    let mut out = ds.clone();
    if std == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("std checked finite and positive");
    if matches!(scope, NoiseScope::Inputs | NoiseScope::Both) {
        for r in 0..out.inputs.nrows() {
            for c in 0..out.inputs.ncols() {
                out.inputs[(r, c)] += normal.sample(&mut rng);
            }
        }
    }
    if matches!(scope, NoiseScope::Targets | NoiseScope::Both) {
        for r in 0..out.targets.len() {
            out.targets[r] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

fn csv_reader(path: &Path, has_header: bool) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(has_header)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.display().to_string(), row: None, column: None, message: e.to_string() })
}

fn parse_cell(field: &str, path: &Path, row: usize, column: usize) -> Result<f64> {
    let make = |message: String| Error::Csv {
        path: path.display().to_string(),
        row: Some(row),
        column: Some(column),
        message,
    };
    let v: f64 = field.parse().map_err(|_| make(format!("not a number: {field:?}")))?;
    if v.is_nan() {
        return Err(make("NaN cell".into()));
    }
    Ok(v)
}

fn read_rows(path: &Path, has_header: bool) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv_reader(path, has_header)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            row: Some(i + 1),
            column: None,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

/// Loads a dataset from CSV. `input_columns` and `target_column` are
/// zero-based column indices. Lines starting with `#` are skipped.
pub fn load_csv(path: &Path, input_columns: &[usize], target_column: usize, has_header: bool) -> Result<Dataset> {
    if input_columns.is_empty() {
        return Err(Error::Config("need at least one input column".into()));
    }
    let rows = read_rows(path, has_header)?;
    if rows.is_empty() {
        return Err(Error::Csv { path: path.display().to_string(), row: None, column: None, message: "no data rows".into() });
    }
    let mut inputs = DMatrix::zeros(rows.len(), input_columns.len());
    let mut targets = DVector::zeros(rows.len());
    for (r, rec) in rows.iter().enumerate() {
        let fetch = |col: usize| -> Result<&String> {
            rec.get(col).ok_or(Error::Csv {
                path: path.display().to_string(),
                row: Some(r + 1),
                column: Some(col),
                message: format!("row has only {} columns", rec.len()),
            })
        };
        for (c, &col) in input_columns.iter().enumerate() {
            inputs[(r, c)] = parse_cell(fetch(col)?, path, r + 1, col)?;
        }
        targets[r] = parse_cell(fetch(target_column)?, path, r + 1, target_column)?;
    }
    Dataset::new(inputs, targets)
}

/// Loads one column of a CSV as a series.
pub fn load_series_csv(path: &Path, column: usize, has_header: bool) -> Result<Vec<f64>> {
    let rows = read_rows(path, has_header)?;
    let mut out = Vec::with_capacity(rows.len());
    for (r, rec) in rows.iter().enumerate() {
        let field = rec.get(column).ok_or(Error::Csv {
            path: path.display().to_string(),
            row: Some(r + 1),
            column: Some(column),
            message: format!("row has only {} columns", rec.len()),
        })?;
        out.push(parse_cell(field, path, r + 1, column)?);
    }
    Ok(out)
}

/// Writes `x1..xn,y` rows with a header, using shortest round-trip decimal
/// formatting so a reload reproduces every bit.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| Error::Csv { path: path.display().to_string(), row: None, column: None, message: e.to_string() })?;
    let mut header: Vec<String> = (1..=ds.dims()).map(|c| format!("x{c}")).collect();
    header.push("y".into());
    let io_err = |e: csv::Error| Error::Csv {
        path: path.display().to_string(),
        row: None,
        column: None,
        message: e.to_string(),
    };
    wtr.write_record(&header).map_err(io_err)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = (0..ds.dims()).map(|c| ds.inputs[(r, c)].to_string()).collect();
        rec.push(ds.targets[r].to_string());
        wtr.write_record(&rec).map_err(io_err)?;
    }
    wtr.flush().map_err(Error::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_hump_peaks() {
        // At the first center the rotated coordinates of hump 1 vanish, so its
        // term is exactly 10; hump 2's term there is below 1e-300.
        let y1 = two_hump_value(-0.7, 1.3);
        assert!((y1 - 10.0).abs() < 1e-12, "got {y1}");
        // At the second center hump 2 contributes exactly 8 and hump 1 decays
        // slowly (fractional exponents), leaving a visible tail.
        let y2 = two_hump_value(1.2, -0.6);
        let z11: f64 = -4.5721 * 1.9 + -2.1415 * -1.9;
        let z12: f64 = -0.3855 * 1.9 + 0.8230 * -1.9;
        let tail = 10.0 * (-(z11.abs().powf(0.6) + z12.abs().powf(0.8))).exp();
        assert!((y2 - (8.0 + tail)).abs() < 1e-12, "got {y2}");
        assert!(y2 > 8.0 && y2 < 8.2);
    }

    #[test]
    fn two_hump_samples_in_domain_and_deterministic() {
        let a = synthetic_two_hump(700, 42);
        let b = synthetic_two_hump(700, 42);
        let c = synthetic_two_hump(700, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 700);
        assert_eq!(a.dims(), 2);
        for r in 0..a.len() {
            assert!(a.inputs[(r, 0)] >= -2.0 && a.inputs[(r, 0)] <= 3.0);
            assert!(a.inputs[(r, 1)] >= -2.0 && a.inputs[(r, 1)] <= 3.0);
            assert_eq!(a.targets[r], two_hump_value(a.inputs[(r, 0)], a.inputs[(r, 1)]));
        }
    }

    #[test]
    fn mackey_glass_history_and_bounds() {
        let series = mackey_glass(1.2, 17.0, 1000, 0.1).unwrap();
        assert_eq!(series.len(), 1001);
        assert_eq!(series[0], 1.2);
        let (min, max) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        assert!(min > 0.15, "min {min}");
        assert!(max < 1.5, "max {max}");
    }

    #[test]
    fn mackey_glass_is_not_integer_periodic() {
        let series = mackey_glass(1.2, 17.0, 1000, 0.1).unwrap();
        // Check the tail (past transients): no integer period up to 50 makes
        // the series repeat within 0.05.
        let tail = &series[500..];
        for period in 1..=50usize {
            let max_diff = (0..tail.len() - period)
                .map(|i| (tail[i + period] - tail[i]).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff > 0.05, "near-periodic at period {period}");
        }
    }

    #[test]
    fn mackey_glass_converges_under_step_refinement() {
        let coarse = mackey_glass(1.2, 17.0, 1123, 0.1).unwrap();
        let fine = mackey_glass(1.2, 17.0, 1123, 0.05).unwrap();
        for t in 0..=1123 {
            assert!((coarse[t] - fine[t]).abs() < 1e-4, "t={t}: {} vs {}", coarse[t], fine[t]);
        }
    }

    #[test]
    fn mackey_glass_rejects_bad_config() {
        assert!(mackey_glass(1.2, 16.5, 100, 0.1).is_err());
        assert!(mackey_glass(1.2, 17.0, 100, 0.0).is_err());
        assert!(mackey_glass(1.2, 17.0, 100, 0.3).is_err()); // does not divide 1
    }

    #[test]
    fn lag_embed_example() {
        let series: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let ds = lag_embed(&series, &SeriesSpec { lags: vec![1, 2], horizon: 0 }).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.row(0), DVector::from_vec(vec![2.0, 1.0]));
        assert_eq!(ds.targets[0], 3.0);
        assert_eq!(ds.row(7), DVector::from_vec(vec![9.0, 8.0]));
        assert_eq!(ds.targets[7], 10.0);
    }

    #[test]
    fn lag_embed_horizon_shifts_target() {
        let series: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let ds = lag_embed(&series, &SeriesSpec { lags: vec![0, 1, 2, 3], horizon: 1 }).unwrap();
        assert_eq!(ds.len(), 20 - 3 - 1);
        // First row: t = 3, inputs s[3],s[2],s[1],s[0], target s[4].
        assert_eq!(ds.row(0), DVector::from_vec(vec![3.0, 2.0, 1.0, 0.0]));
        assert_eq!(ds.targets[0], 4.0);
    }

    #[test]
    fn lag_embed_never_leaks_future() {
        let series: Vec<f64> = (0..50).map(|v| v as f64).collect();
        let spec = SeriesSpec { lags: vec![6, 12, 18, 24], horizon: 0 };
        let ds = lag_embed(&series, &spec).unwrap();
        // The series equals its own time index, so every input value must be
        // strictly below the target value.
        for r in 0..ds.len() {
            for c in 0..ds.dims() {
                assert!(ds.inputs[(r, c)] < ds.targets[r]);
            }
        }
    }

    #[test]
    fn lag_embed_rejects_short_series() {
        let series = vec![1.0, 2.0, 3.0];
        assert!(lag_embed(&series, &SeriesSpec { lags: vec![5], horizon: 0 }).is_err());
        assert!(lag_embed(&series, &SeriesSpec { lags: vec![], horizon: 0 }).is_err());
    }

    #[test]
    fn multi_series_embedding_row_count() {
        // Two aligned series of length 296 with input lags 4 and 1 leave 292 rows.
        let u: Vec<f64> = (0..296).map(|v| v as f64).collect();
        let y: Vec<f64> = (0..296).map(|v| 1000.0 + v as f64).collect();
        let spec = MultiSeriesSpec { inputs: vec![(0, 4), (1, 1)], target: 1, horizon: 0 };
        let ds = lag_embed_multi(&[u, y], &spec).unwrap();
        assert_eq!(ds.len(), 292);
        assert_eq!(ds.dims(), 2);
        // First row: t = 4, inputs u[0], y[3], target y[4].
        assert_eq!(ds.row(0), DVector::from_vec(vec![0.0, 1003.0]));
        assert_eq!(ds.targets[0], 1004.0);
    }

    #[test]
    fn multi_series_embedding_validates() {
        let spec = MultiSeriesSpec { inputs: vec![(0, 1), (2, 1)], target: 0, horizon: 0 };
        assert!(lag_embed_multi(&[vec![1.0; 10], vec![1.0; 10]], &spec).is_err());
        let spec = MultiSeriesSpec { inputs: vec![(0, 1)], target: 1, horizon: 0 };
        assert!(lag_embed_multi(&[vec![1.0; 10], vec![1.0; 9]], &spec).is_err());
    }

    #[test]
    fn noise_zero_std_is_identity() {
        let series = vec![1.0, 2.0, 3.5];
        assert_eq!(add_noise_series(&series, 0.0, 9).unwrap(), series);
        let ds = synthetic_two_hump(50, 1);
        assert_eq!(add_noise_dataset(&ds, 0.0, 9, NoiseScope::Both).unwrap(), ds);
        assert!(add_noise_series(&series, -0.1, 9).is_err());
    }

    #[test]
    fn noise_is_seeded_and_calibrated() {
        let series = vec![0.0; 20000];
        let a = add_noise_series(&series, 0.3, 7).unwrap();
        let b = add_noise_series(&series, 0.3, 7).unwrap();
        let c = add_noise_series(&series, 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let std = (a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / a.len() as f64).sqrt();
        assert!((std - 0.3).abs() < 0.015, "sample std {std}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn noise_scope_limits_columns() {
        let ds = synthetic_two_hump(100, 3);
        let only_inputs = add_noise_dataset(&ds, 0.5, 11, NoiseScope::Inputs).unwrap();
        assert_eq!(only_inputs.targets, ds.targets);
        assert_ne!(only_inputs.inputs, ds.inputs);
        let only_targets = add_noise_dataset(&ds, 0.5, 11, NoiseScope::Targets).unwrap();
        assert_eq!(only_targets.inputs, ds.inputs);
        assert_ne!(only_targets.targets, ds.targets);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = synthetic_two_hump(40, 5);
        save_csv(&ds, &path).unwrap();
        let loaded = load_csv(&path, &[0, 1], 2, true).unwrap();
        assert_eq!(loaded.inputs, ds.inputs);
        assert_eq!(loaded.targets, ds.targets);
    }

    #[test]
    fn csv_comments_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        std::fs::write(&path, "# comment line\n1.5,2.5,3.5\n4.0,5.0,6.0\n").unwrap();
        let ds = load_csv(&path, &[0, 1], 2, false).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.targets[1], 6.0);
        let series = load_series_csv(&path, 1, false).unwrap();
        assert_eq!(series, vec![2.5, 5.0]);

        // Missing column names row and column.
        match load_csv(&path, &[0, 7], 2, false) {
            Err(Error::Csv { row: Some(1), column: Some(7), .. }) => {}
            other => panic!("expected csv error naming row 1 column 7, got {other:?}"),
        }
        // NaN cell rejected.
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "1.0,NaN,2.0\n").unwrap();
        match load_csv(&bad, &[0, 1], 2, false) {
            Err(Error::Csv { row: Some(1), column: Some(1), .. }) => {}
            other => panic!("expected NaN error, got {other:?}"),
        }
    }

    #[test]
    fn minmax_normalization_spans_unit_interval() {
        let ds = synthetic_two_hump(200, 17);
        let norm = Normalization::fit(&ds, NormMode::MinMax01).unwrap();
        let scaled = norm.apply(&ds).unwrap();
        for c in 0..2 {
            let col = scaled.inputs.column(c);
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(min.abs() < 1e-15 && (max - 1.0).abs() < 1e-15);
        }
        // Inverse of forward is the identity.
        for r in 0..ds.len() {
            let back = norm.target.inverse(scaled.targets[r]);
            assert!((back - ds.targets[r]).abs() < 1e-12);
        }
        assert_eq!(scaled.normalization.as_ref().unwrap(), &norm);
    }

    #[test]
    fn zscore_normalization_standardizes() {
        let ds = synthetic_two_hump(500, 23);
        let norm = Normalization::fit(&ds, NormMode::ZScore).unwrap();
        let scaled = norm.apply(&ds).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = scaled.inputs.column(c).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((std - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected_and_metadata_round_trips() {
        let inputs = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 1.0, 6.0, 1.0, 7.0]);
        let targets = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let ds = Dataset::new(inputs, targets).unwrap();
        match Normalization::fit(&ds, NormMode::MinMax01) {
            Err(Error::ConstantColumn { column: 0 }) => {}
            other => panic!("expected constant-column error, got {other:?}"),
        }
        let norm = Normalization::fit(&ds, NormMode::None).unwrap();
        let json = serde_json::to_string(&norm).unwrap();
        let back: Normalization = serde_json::from_str(&json).unwrap();
        assert_eq!(back, norm);
    }

    #[test]
    fn splits_partition_the_rows() {
        let ds = synthetic_two_hump(100, 2);
        let (train, test) = ds.split_at(70).unwrap();
        assert_eq!(train.len(), 70);
        assert_eq!(test.len(), 30);
        assert_eq!(train.targets[0], ds.targets[0]);
        assert_eq!(test.targets[0], ds.targets[70]);

        let (a, b) = ds.split_shuffled(60, 5).unwrap();
        let (a2, _) = ds.split_shuffled(60, 5).unwrap();
        assert_eq!(a, a2);
        assert_eq!(a.len() + b.len(), 100);
        let mut all: Vec<f64> = a.targets.iter().chain(b.targets.iter()).copied().collect();
        let mut orig: Vec<f64> = ds.targets.iter().copied().collect();
        all.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(all, orig);
        assert!(ds.split_at(0).is_err());
        assert!(ds.split_shuffled(100, 1).is_err());
    }
}
