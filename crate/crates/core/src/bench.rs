//! Benchmark experiment runner.
//!
//! An experiment is a dataset recipe plus a rule count, a training
//! configuration, and a grid of noise cells; each cell repeats over derived
//! noise seeds and reports mean/min/max test RMSE in original target units.
//! The canned protocols (two-hump surface, chaotic delay series, gas-furnace
//! identification) take their constants from an embedded, versioned registry
//! so any drift from the reference setup is auditable in one place.
//!
//! Everything persisted (reports, manifests, models, histories) is a pure
//! function of the experiment spec, so identical specs produce byte-identical
//! artifacts. Wall time is printed, never written.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, add_noise_dataset, add_noise_series, lag_embed, lag_embed_multi, load_series_csv, mackey_glass,
    synthetic_two_hump, Dataset, MultiSeriesSpec, NoiseScope, NormMode, Normalization, SeriesSpec,
};
use crate::error::{Error, Result};
use crate::init::initialize;
use crate::model::SavedModel;
use crate::network::param_count;
use crate::train::{fit, TrainConfig, TrainHistory, ValidationSplit};

/// Root mean squared error between predictions and targets.
pub fn rmse(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: predictions.len(),
            what: "prediction rows",
        });
    }
    if predictions.is_empty() {
        return Err(Error::Domain("rmse needs at least one sample".into()));
    }
    Ok(((predictions - targets).norm_squared() / targets.len() as f64).sqrt())
}

/// How an experiment obtains its train/test datasets.
///
/// Noise semantics differ by recipe. For the static surface, noise perturbs
/// the sampled training rows under the experiment's scope. For generated
/// series, noise perturbs the raw series before lag embedding (inputs and
/// targets inherit it together) and a zero std means the untouched series.
/// CSV-backed recipes are measured data; they reject noise injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRecipe {
    TwoHump {
        samples: usize,
        train_rows: usize,
        data_seed: u64,
        shuffle_seed: u64,
    },
    MackeyGlass {
        x0: f64,
        tau: f64,
        dt: f64,
        t_end: usize,
        lags: Vec<usize>,
        /// Embedded rows skipped before the train window (warm-up).
        embed_skip: usize,
        train_rows: usize,
        test_rows: usize,
    },
    SeriesCsv {
        path: String,
        column: usize,
        has_header: bool,
        lags: Vec<usize>,
        horizon: usize,
        train_rows: usize,
    },
    MultiSeriesCsv {
        path: String,
        has_header: bool,
        /// (column index, lag) pairs in input order.
        input_lags: Vec<(usize, usize)>,
        target: usize,
        horizon: usize,
        train_rows: usize,
    },
}

impl DataRecipe {
    /// Materializes the train/test pair for one noise cell. `seed` drives the
    /// training noise; the test perturbation (when any) uses a fixed
    /// variation of it so the two draws never alias.
    pub fn build(&self, train_std: f64, test_std: f64, seed: u64, scope: NoiseScope) -> Result<(Dataset, Dataset)> {
        let test_seed = seed ^ 0x5555_5555_5555_5555;
        match self {
            DataRecipe::TwoHump { samples, train_rows, data_seed, shuffle_seed } => {
                let full = synthetic_two_hump(*samples, *data_seed);
                let (train, test) = full.split_shuffled(*train_rows, *shuffle_seed)?;
                let train = add_noise_dataset(&train, train_std, seed, scope)?;
                let test = add_noise_dataset(&test, test_std, test_seed, scope)?;
                Ok((train, test))
            }
            DataRecipe::MackeyGlass { x0, tau, dt, t_end, lags, embed_skip, train_rows, test_rows } => {
                let spec = SeriesSpec { lags: lags.clone(), horizon: 0 };
                let base = mackey_glass(*x0, *tau, *t_end, *dt)?;
                let train_series = add_noise_series(&base, train_std, seed)?;
                let train = lag_embed(&train_series, &spec)?.rows_range(*embed_skip, *train_rows)?;
                let test_series = add_noise_series(&base, test_std, test_seed)?;
                let test = lag_embed(&test_series, &spec)?.rows_range(embed_skip + train_rows, *test_rows)?;
                Ok((train, test))
            }
            DataRecipe::SeriesCsv { path, column, has_header, lags, horizon, train_rows } => {
                reject_noise(train_std, test_std)?;
                let series = load_series_csv(Path::new(path), *column, *has_header)?;
                let spec = SeriesSpec { lags: lags.clone(), horizon: *horizon };
                lag_embed(&series, &spec)?.split_at(*train_rows)
            }
            DataRecipe::MultiSeriesCsv { path, has_header, input_lags, target, horizon, train_rows } => {
                reject_noise(train_std, test_std)?;
                let table = load_all_columns(Path::new(path), *has_header)?;
                let spec = MultiSeriesSpec { inputs: input_lags.clone(), target: *target, horizon: *horizon };
                lag_embed_multi(&table, &spec)?.split_at(*train_rows)
            }
        }
    }
}

fn reject_noise(train_std: f64, test_std: f64) -> Result<()> {
    if train_std != 0.0 || test_std != 0.0 {
        return Err(Error::Config("noise injection applies to generated data only, not CSV recipes".into()));
    }
    Ok(())
}

/// Loads every column of a numeric CSV as one series per column.
fn load_all_columns(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    // Column count is discovered from the first data row.
    let probe = data::load_series_csv(path, 0, has_header)?;
    let mut out = vec![probe];
    for c in 1.. {
        match data::load_series_csv(path, c, has_header) {
            Ok(col) => out.push(col),
            Err(_) => break,
        }
    }
    Ok(out)
}

/// One cell of the noise grid; a std of zero means untouched data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCell {
    pub train_std: f64,
    pub test_std: f64,
}

/// Full description of a reproducible benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub recipe: DataRecipe,
    pub rules: usize,
    pub epsilon_delta: f64,
    pub normalization: NormMode,
    pub noise_scope: NoiseScope,
    pub train: TrainConfig,
    pub noise_grid: Vec<NoiseCell>,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Version of the embedded protocol registry that produced the spec;
    /// zero marks a hand-built spec.
    pub registry_version: u32,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::Config(format!(
                "experiment name {:?} must be non-empty alphanumeric/dash/underscore",
                self.name
            )));
        }
        if self.rules == 0 {
            return Err(Error::Config("need at least one rule".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("need at least one repetition".into()));
        }
        if self.noise_grid.is_empty() {
            return Err(Error::Config("noise grid must have at least one cell".into()));
        }
        if self.noise_grid.iter().any(|c| c.train_std < 0.0 || c.test_std < 0.0) {
            return Err(Error::Config("noise standard deviations must be non-negative".into()));
        }
        self.train.validate()
    }
}

/// Aggregated results of one noise cell. RMSE statistics cover the
/// successful repetitions; failures carry the error messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub train_std: f64,
    pub test_std: f64,
    pub repetitions: usize,
    pub rep_rmse: Vec<f64>,
    pub failures: Vec<String>,
    pub rmse_mean: Option<f64>,
    pub rmse_min: Option<f64>,
    pub rmse_max: Option<f64>,
    /// Mean initialization-only test RMSE, the before-training baseline.
    pub init_rmse_mean: Option<f64>,
    /// Mean footprint-of-uncertainty width of the trained networks.
    pub fou_width_mean: Option<f64>,
}

/// Results of a full experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub rules: usize,
    pub inputs: usize,
    /// Structural parameter count (type-reduction weights excluded).
    pub param_count: usize,
    pub cells: Vec<CellReport>,
    /// Runtime of the run; informational only and never persisted.
    #[serde(skip)]
    pub wall_secs: f64,
}

/// Reproduction record written next to every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    /// Noise seed per grid cell and repetition, derived from the base seed.
    pub derived_seeds: Vec<Vec<u64>>,
}

/// Deterministic per-repetition seed: cell and repetition indices are mixed
/// into the base seed with distinct odd multipliers.
pub fn derive_seed(base: u64, cell: usize, rep: usize) -> u64 {
    base ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rep as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Result of one repetition, before aggregation.
#[derive(Debug, Clone)]
pub struct RepResult {
    pub test_rmse: f64,
    pub init_rmse: f64,
    pub fou_width: f64,
    pub model: SavedModel,
    pub history: TrainHistory,
}

/// Runs one initialization + fit + evaluation at a fixed noise seed.
pub fn run_repetition(spec: &ExperimentSpec, cell: &NoiseCell, seed: u64) -> Result<RepResult> {
    let (train_raw, test_raw) = spec.recipe.build(cell.train_std, cell.test_std, seed, spec.noise_scope)?;
    let (train, norm) = match spec.normalization {
        NormMode::None => (train_raw, None),
        mode => {
            let norm = Normalization::fit(&train_raw, mode)?;
            (norm.apply(&train_raw)?, Some(norm))
        }
    };
    let initial = initialize(&train, spec.rules, spec.epsilon_delta)?;
    let init_model = SavedModel::new(initial.clone(), norm.clone())?;
    let init_rmse = rmse(&init_model.predict(&test_raw.inputs)?, &test_raw.targets)?;

    let fitted = fit(&initial, &train, &spec.train)?;
    let fou_width = fitted.network.mean_fou_width();
    let model = SavedModel::new(fitted.network, norm)?;
    let test_rmse = rmse(&model.predict(&test_raw.inputs)?, &test_raw.targets)?;
    Ok(RepResult { test_rmse, init_rmse, fou_width, model, history: fitted.history })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Runs the full noise grid. Each repetition is isolated: one failure is
/// recorded in its cell and the rest of the grid still runs. When `out_dir`
/// is given, the per-repetition model and history plus the report CSV and
/// the manifest are written there.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<RunReport> {
    spec.validate()?;
    let started = Instant::now();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(Error::Io)?;
    }

    let mut cells = Vec::with_capacity(spec.noise_grid.len());
    let mut derived_seeds = Vec::with_capacity(spec.noise_grid.len());
    let mut dims: Option<(usize, usize)> = None;
    for (ci, cell) in spec.noise_grid.iter().enumerate() {
        let mut rep_rmse = Vec::new();
        let mut init_rmses = Vec::new();
        let mut fou_widths = Vec::new();
        let mut failures = Vec::new();
        let mut seeds = Vec::with_capacity(spec.repetitions);
        for rep in 0..spec.repetitions {
            let seed = derive_seed(spec.base_seed, ci, rep);
            seeds.push(seed);
            match run_repetition(spec, cell, seed) {
                Ok(result) => {
                    dims = Some((result.model.network.rule_count(), result.model.network.inputs()));
                    if let Some(dir) = out_dir {
                        let stem = format!("{}_c{}_r{}", spec.name, ci, rep);
                        result.model.save(&dir.join(format!("{stem}_model.json")))?;
                        result.history.write_csv(&dir.join(format!("{stem}_history.csv")))?;
                    }
                    rep_rmse.push(result.test_rmse);
                    init_rmses.push(result.init_rmse);
                    fou_widths.push(result.fou_width);
                }
                Err(err) => {
                    log::warn!("{} cell {} rep {} failed: {}", spec.name, ci, rep, err);
                    failures.push(format!("rep {rep}: {err}"));
                }
            }
        }
        derived_seeds.push(seeds);
        cells.push(CellReport {
            train_std: cell.train_std,
            test_std: cell.test_std,
            repetitions: spec.repetitions,
            rmse_mean: mean(&rep_rmse),
            rmse_min: rep_rmse.iter().copied().reduce(f64::min),
            rmse_max: rep_rmse.iter().copied().reduce(f64::max),
            init_rmse_mean: mean(&init_rmses),
            fou_width_mean: mean(&fou_widths),
            rep_rmse,
            failures,
        });
    }

    let (rules, inputs) = dims.unwrap_or((spec.rules, 0));
    let report = RunReport {
        name: spec.name.clone(),
        rules,
        inputs,
        param_count: param_count(rules, inputs),
        cells,
        wall_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        write_report_csv(&report, &dir.join(format!("{}_report.csv", spec.name)))?;
        let manifest = Manifest { spec: spec.clone(), derived_seeds };
        write_manifest(&manifest, &dir.join(format!("{}_manifest.json", spec.name)))?;
    }
    Ok(report)
}

fn fmt_noise(std: f64) -> String {
    if std == 0.0 {
        "clean".to_string()
    } else {
        std.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one CSV row per grid cell.
pub fn write_report_csv(report: &RunReport, path: &Path) -> Result<()> {
    let map_err = |e: csv::Error| Error::Csv {
        path: path.display().to_string(),
        row: None,
        column: None,
        message: e.to_string(),
    };
    let mut wtr = csv::Writer::from_path(path).map_err(map_err)?;
    wtr.write_record([
        "train_noise",
        "test_noise",
        "rules",
        "params",
        "repetitions",
        "failures",
        "rmse_mean",
        "rmse_min",
        "rmse_max",
        "init_rmse_mean",
        "fou_width_mean",
    ])
    .map_err(map_err)?;
    for cell in &report.cells {
        wtr.write_record([
            fmt_noise(cell.train_std),
            fmt_noise(cell.test_std),
            report.rules.to_string(),
            report.param_count.to_string(),
            cell.repetitions.to_string(),
            cell.failures.len().to_string(),
            fmt_opt(cell.rmse_mean),
            fmt_opt(cell.rmse_min),
            fmt_opt(cell.rmse_max),
            fmt_opt(cell.init_rmse_mean),
            fmt_opt(cell.fou_width_mean),
        ])
        .map_err(map_err)?;
    }
    wtr.flush().map_err(Error::Io)?;
    Ok(())
}

fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::Io)?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, manifest).map_err(Error::Json)?;
    use std::io::Write;
    writeln!(writer).map_err(Error::Io)?;
    Ok(())
}

/// Renders the report as an aligned text table for standard output.
pub fn render_report_table(report: &RunReport) -> String {
    let mut rows = vec![vec![
        "train".to_string(),
        "test".to_string(),
        "rules".to_string(),
        "params".to_string(),
        "rmse mean".to_string(),
        "rmse min".to_string(),
        "rmse max".to_string(),
        "init rmse".to_string(),
        "fails".to_string(),
    ]];
    let fmt6 = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".to_string());
    for cell in &report.cells {
        rows.push(vec![
            fmt_noise(cell.train_std),
            fmt_noise(cell.test_std),
            report.rules.to_string(),
            report.param_count.to_string(),
            fmt6(cell.rmse_mean),
            fmt6(cell.rmse_min),
            fmt6(cell.rmse_max),
            fmt6(cell.init_rmse_mean),
            cell.failures.len().to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        out.push_str(&format!("{} | {}\n", report.name, line.join("  ")));
        if i == 0 {
            let dashes: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&format!("{} | {}\n", report.name, dashes.join("  ")));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Canned protocols from the embedded registry.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
pub struct TwoHumpProtocol {
    pub samples: usize,
    pub train_rows: usize,
    pub data_seed: u64,
    pub shuffle_seed: u64,
    pub rules: usize,
    pub epsilon_delta: f64,
    pub validation_fraction: f64,
    pub validation_seed: u64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MackeyGlassProtocol {
    pub x0: f64,
    pub tau: f64,
    pub dt: f64,
    pub t_end: usize,
    pub lags: Vec<usize>,
    pub embed_skip: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub rules: usize,
    pub epsilon_delta: f64,
    pub validation_fraction: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoxJenkinsProtocol {
    pub input_lags: Vec<(usize, usize)>,
    pub target: usize,
    pub train_rows: usize,
    pub rules: usize,
    pub epsilon_delta: f64,
    pub validation_fraction: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub patience: usize,
}

/// Protocol constants for the canned experiments.
#[derive(Debug, Clone, Deserialize)]
pub struct Registry {
    pub version: u32,
    pub two_hump: TwoHumpProtocol,
    pub mackey_glass: MackeyGlassProtocol,
    pub box_jenkins: BoxJenkinsProtocol,
}

impl Registry {
    /// Parses the registry compiled into the library.
    pub fn embedded() -> Registry {
        serde_json::from_str(include_str!("registry.json")).expect("embedded registry must parse")
    }
}

impl ExperimentSpec {
    /// Static two-hump surface: 700 samples on [-2,3]^2, 350/350 random
    /// split, 2 rules. Noise perturbs inputs and targets together, the same
    /// convention as series noise: jitter in the inputs is what the learned
    /// uncertainty band has to absorb.
    pub fn two_hump(reg: &Registry, noise_grid: Vec<NoiseCell>, repetitions: usize, base_seed: u64) -> ExperimentSpec {
        let p = &reg.two_hump;
        ExperimentSpec {
            name: "two-hump".into(),
            recipe: DataRecipe::TwoHump {
                samples: p.samples,
                train_rows: p.train_rows,
                data_seed: p.data_seed,
                shuffle_seed: p.shuffle_seed,
            },
            rules: p.rules,
            epsilon_delta: p.epsilon_delta,
            normalization: NormMode::None,
            noise_scope: NoiseScope::Both,
            train: TrainConfig {
                validation_fraction: p.validation_fraction,
                validation_split: ValidationSplit::Random { seed: p.validation_seed },
                max_outer: p.max_outer,
                max_inner: p.max_inner,
                patience: p.patience,
                ..TrainConfig::default()
            },
            noise_grid,
            repetitions,
            base_seed,
            registry_version: reg.version,
        }
    }

    /// Chaotic delay series: x(t) from lags {6,12,18,24}, rows t in
    /// [124, 1123], 500/500 temporal split, 2 rules, series-level noise.
    pub fn mackey_glass(
        reg: &Registry,
        noise_grid: Vec<NoiseCell>,
        repetitions: usize,
        base_seed: u64,
    ) -> ExperimentSpec {
        let p = &reg.mackey_glass;
        ExperimentSpec {
            name: "mackey-glass".into(),
            recipe: DataRecipe::MackeyGlass {
                x0: p.x0,
                tau: p.tau,
                dt: p.dt,
                t_end: p.t_end,
                lags: p.lags.clone(),
                embed_skip: p.embed_skip,
                train_rows: p.train_rows,
                test_rows: p.test_rows,
            },
            rules: p.rules,
            epsilon_delta: p.epsilon_delta,
            normalization: NormMode::None,
            noise_scope: NoiseScope::Both,
            train: TrainConfig {
                validation_fraction: p.validation_fraction,
                validation_split: ValidationSplit::Tail,
                max_outer: p.max_outer,
                max_inner: p.max_inner,
                patience: p.patience,
                ..TrainConfig::default()
            },
            noise_grid,
            repetitions,
            base_seed,
            registry_version: reg.version,
        }
    }

    /// Gas-furnace identification: y(t) from u(t-4) and y(t-1), 200/92
    /// temporal split, 3 rules, unit-interval normalization, measured data
    /// (no noise cells).
    pub fn box_jenkins(reg: &Registry, csv_path: &str, base_seed: u64) -> ExperimentSpec {
        let p = &reg.box_jenkins;
        ExperimentSpec {
            name: "box-jenkins".into(),
            recipe: DataRecipe::MultiSeriesCsv {
                path: csv_path.to_string(),
                has_header: true,
                input_lags: p.input_lags.clone(),
                target: p.target,
                horizon: 0,
                train_rows: p.train_rows,
            },
            rules: p.rules,
            epsilon_delta: p.epsilon_delta,
            normalization: NormMode::MinMax01,
            noise_scope: NoiseScope::Both,
            train: TrainConfig {
                validation_fraction: p.validation_fraction,
                validation_split: ValidationSplit::Tail,
                max_outer: p.max_outer,
                max_inner: p.max_inner,
                patience: p.patience,
                ..TrainConfig::default()
            },
            noise_grid: vec![NoiseCell { train_std: 0.0, test_std: 0.0 }],
            repetitions: 1,
            base_seed,
            registry_version: reg.version,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_values() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let shifted = a.map(|v| v + 2.5);
        assert!((rmse(&shifted, &a).unwrap() - 2.5).abs() < 1e-15);
        let p = DVector::from_vec(vec![0.0, 0.0]);
        let t = DVector::from_vec(vec![3.0, 4.0]);
        assert!((rmse(&p, &t).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_rejects_mismatch_and_empty() {
        let a = DVector::from_vec(vec![1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(rmse(&a, &b).is_err());
        let e = DVector::from_vec(Vec::<f64>::new());
        assert!(rmse(&e, &e).is_err());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for cell in 0..8 {
            for rep in 0..8 {
                assert!(seen.insert(derive_seed(99, cell, rep)));
            }
        }
    }

    #[test]
    fn registry_parses_with_protocol_constants() {
        let reg = Registry::embedded();
        assert_eq!(reg.version, 1);
        assert_eq!(reg.mackey_glass.lags, vec![6, 12, 18, 24]);
        assert_eq!(reg.mackey_glass.train_rows, 500);
        assert_eq!(reg.mackey_glass.test_rows, 500);
        assert_eq!(reg.mackey_glass.embed_skip, 100);
        assert_eq!(reg.two_hump.samples, 700);
        assert_eq!(reg.two_hump.train_rows, 350);
        assert_eq!(reg.box_jenkins.train_rows, 200);
        assert_eq!(reg.box_jenkins.rules, 3);
        assert_eq!(reg.box_jenkins.input_lags, vec![(0, 4), (1, 1)]);
    }

    #[test]
    fn mackey_glass_recipe_builds_contracted_shape() {
        let reg = Registry::embedded();
        let spec = ExperimentSpec::mackey_glass(&reg, vec![NoiseCell { train_std: 0.0, test_std: 0.0 }], 1, 1);
        let (train, test) = spec.recipe.build(0.0, 0.0, 7, NoiseScope::Both).unwrap();
        assert_eq!((train.len(), train.dims()), (500, 4));
        assert_eq!((test.len(), test.dims()), (500, 4));
        // Row alignment: the first train row predicts x(124) from
        // x(118), x(112), x(106), x(100).
        let series = mackey_glass(1.2, 17.0, 1123, 0.1).unwrap();
        assert_eq!(train.targets[0], series[124]);
        assert_eq!(train.inputs[(0, 0)], series[118]);
        assert_eq!(train.inputs[(0, 3)], series[100]);
        assert_eq!(test.targets[499], series[1123]);
        // Noisy train, clean test: trains differ, tests agree.
        let (noisy_train, clean_test) = spec.recipe.build(0.1, 0.0, 7, NoiseScope::Both).unwrap();
        assert_ne!(noisy_train.targets[0], train.targets[0]);
        assert_eq!(clean_test.targets, test.targets);
    }

    #[test]
    fn csv_recipes_reject_noise() {
        let recipe = DataRecipe::SeriesCsv {
            path: "unused.csv".into(),
            column: 0,
            has_header: false,
            lags: vec![1],
            horizon: 0,
            train_rows: 2,
        };
        assert!(recipe.build(0.1, 0.0, 1, NoiseScope::Both).is_err());
    }

    fn tiny_two_hump_spec() -> ExperimentSpec {
        let reg = Registry::embedded();
        let mut spec = ExperimentSpec::two_hump(
            &reg,
            vec![NoiseCell { train_std: 0.0, test_std: 0.0 }, NoiseCell { train_std: 0.2, test_std: 0.0 }],
            2,
            11,
        );
        spec.recipe = DataRecipe::TwoHump { samples: 140, train_rows: 70, data_seed: 5, shuffle_seed: 6 };
        spec.train.max_outer = 2;
        spec.train.max_inner = 4;
        spec
    }

    #[test]
    fn experiment_artifacts_are_byte_identical_across_runs() {
        let spec = tiny_two_hump_spec();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let report_a = run_experiment(&spec, Some(dir_a.path())).unwrap();
        let report_b = run_experiment(&spec, Some(dir_b.path())).unwrap();
        assert_eq!(report_a.cells, report_b.cells);
        for file in ["two-hump_report.csv", "two-hump_manifest.json", "two-hump_c0_r0_model.json", "two-hump_c1_r1_history.csv"] {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "artifact {file} differs between identical runs");
        }
    }

    #[test]
    fn experiment_report_shape_and_training_gain() {
        let spec = tiny_two_hump_spec();
        let report = run_experiment(&spec, None).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert_eq!(report.rules, 2);
        assert_eq!(report.inputs, 2);
        assert_eq!(report.param_count, 22);
        for cell in &report.cells {
            assert!(cell.failures.is_empty());
            assert_eq!(cell.rep_rmse.len(), 2);
            let mean = cell.rmse_mean.unwrap();
            assert!(mean > 0.0 && mean.is_finite());
            assert!(cell.rmse_min.unwrap() <= mean && mean <= cell.rmse_max.unwrap());
            // Training must beat the raw initialization.
            assert!(mean < cell.init_rmse_mean.unwrap());
        }
        assert!(report.wall_secs > 0.0);
    }

    #[test]
    fn failed_repetitions_are_isolated() {
        let mut spec = tiny_two_hump_spec();
        spec.name = "broken".into();
        spec.recipe = DataRecipe::SeriesCsv {
            path: "/nonexistent/series.csv".into(),
            column: 0,
            has_header: false,
            lags: vec![1],
            horizon: 0,
            train_rows: 2,
        };
        spec.noise_grid = vec![NoiseCell { train_std: 0.0, test_std: 0.0 }];
        let report = run_experiment(&spec, None).unwrap();
        assert_eq!(report.cells[0].failures.len(), 2);
        assert_eq!(report.cells[0].rmse_mean, None);
        assert!(report.cells[0].rep_rmse.is_empty());
    }

    #[test]
    fn report_csv_header_and_clean_labels() {
        let spec = tiny_two_hump_spec();
        let report = run_experiment(&spec, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "train_noise,test_noise,rules,params,repetitions,failures,rmse_mean,rmse_min,rmse_max,init_rmse_mean,fou_width_mean"
        );
        assert!(lines.next().unwrap().starts_with("clean,clean,2,22,2,0,"));
        assert!(lines.next().unwrap().starts_with("0.2,clean,2,22,2,0,"));
    }

    #[test]
    fn spec_validation_rejects_bad_fields() {
        let mut spec = tiny_two_hump_spec();
        spec.name = "bad name!".into();
        assert!(spec.validate().is_err());
        let mut spec = tiny_two_hump_spec();
        spec.repetitions = 0;
        assert!(spec.validate().is_err());
        let mut spec = tiny_two_hump_spec();
        spec.noise_grid[0].train_std = -0.1;
        assert!(spec.validate().is_err());
        assert!(tiny_two_hump_spec().validate().is_ok());
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let spec = tiny_two_hump_spec();
        let manifest = Manifest { spec: spec.clone(), derived_seeds: vec![vec![derive_seed(11, 0, 0)]] };
        let text = serde_json::to_string(&manifest).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(back.derived_seeds, manifest.derived_seeds);
    }
}
