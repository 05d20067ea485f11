//! Command-line driver: dataset generation, rule-base initialization,
//! training, prediction, canned benchmark protocols, and derivative
//! certification.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use it2cfnn::bench::{self, DataRecipe, ExperimentSpec, NoiseCell, Registry};
use it2cfnn::data::{self, Dataset, NoiseScope, NormMode, Normalization};
use it2cfnn::init::initialize;
use it2cfnn::model::SavedModel;
use it2cfnn::network::{self, Network};
use it2cfnn::train::{self, TrainConfig, GROUP_ORDER};
use it2cfnn::Error;
use nalgebra::{DMatrix, DVector};

#[derive(Parser)]
#[command(name = "it2cfnn", version, about = "Interval type-2 fuzzy network modeling toolkit")]
struct Cli {
    /// Base seed for data generation, noise draws, and random splits.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,

    /// JSON file overriding the default training configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory receiving every written artifact.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset as train/test CSV files
    Generate {
        /// Data source to sample.
        #[arg(value_enum)]
        protocol: GeneratedData,
        /// Gaussian noise std for the training data ("clean" or a number).
        #[arg(long, default_value = "clean", value_parser = parse_noise)]
        train_noise: f64,
        /// Gaussian noise std for the test data ("clean" or a number).
        #[arg(long, default_value = "clean", value_parser = parse_noise)]
        test_noise: f64,
        /// Training CSV name inside the output directory.
        #[arg(long, default_value = "train.csv")]
        train_out: String,
        /// Test CSV name inside the output directory.
        #[arg(long, default_value = "test.csv")]
        test_out: String,
    },

    /// Build a rule base from data without training it
    Init(DataArgs),

    /// Initialize and train a model, writing it with its iteration history
    Train(TrainArgs),

    /// Run a saved model over a CSV, writing predictions and reporting RMSE
    Predict {
        /// Saved model file.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Data CSV; targets are read from the target column when present.
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Zero-based target column; default is the last column.
        #[arg(long)]
        target: Option<usize>,
        /// Treat the first row as data rather than a header.
        #[arg(long)]
        no_header: bool,
        /// Predictions CSV name inside the output directory.
        #[arg(long, default_value = "predictions.csv")]
        out: String,
    },

    /// Run a canned benchmark protocol and write its artifacts
    Bench(BenchArgs),

    /// Certify analytic derivatives against central finite differences
    CheckGrad {
        /// Rules of the random network.
        #[arg(long, default_value_t = 2)]
        rules: usize,
        /// Inputs of the random network.
        #[arg(long, default_value_t = 3)]
        inputs: usize,
        /// Random sample points to certify at.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Maximum allowed relative deviation.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum GeneratedData {
    TwoHump,
    MackeyGlass,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Protocol {
    TwoHump,
    MackeyGlass,
    BoxJenkins,
    SeriesCsv,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum NormChoice {
    None,
    Minmax,
    Zscore,
}

impl NormChoice {
    fn mode(self) -> Option<NormMode> {
        match self {
            NormChoice::None => None,
            NormChoice::Minmax => Some(NormMode::MinMax01),
            NormChoice::Zscore => Some(NormMode::ZScore),
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Data CSV; inputs are every column except the target.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Number of fuzzy rules.
    #[arg(long, default_value_t = 2)]
    rules: usize,
    /// Initial half-width of the uncertainty band around each membership shape.
    #[arg(long, default_value_t = 0.1)]
    epsilon_delta: f64,
    /// Column scaling fitted on this data and stored in the model.
    #[arg(long, value_enum, default_value_t = NormChoice::None)]
    normalize: NormChoice,
    /// Zero-based target column; default is the last column.
    #[arg(long)]
    target: Option<usize>,
    /// Treat the first row as data rather than a header.
    #[arg(long)]
    no_header: bool,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.json")]
    model: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// History CSV name inside the output directory.
    #[arg(long, default_value = "history.csv")]
    history: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Canned protocol to run.
    #[arg(value_enum)]
    protocol: Protocol,
    /// Training noise std; generated-data protocols only.
    #[arg(long, default_value = "clean", value_parser = parse_noise)]
    train_noise: f64,
    /// Test noise std; generated-data protocols only.
    #[arg(long, default_value = "clean", value_parser = parse_noise)]
    test_noise: f64,
    /// Override the protocol's rule count.
    #[arg(long)]
    rules: Option<usize>,
    /// Repetitions per noise cell.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Data CSV for csv-backed protocols.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Lag offsets for series-csv, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    lags: Vec<usize>,
    /// Series column for series-csv.
    #[arg(long, default_value_t = 0)]
    column: usize,
    /// Steps ahead of the newest lag to predict (series-csv).
    #[arg(long, default_value_t = 0)]
    horizon: usize,
    /// Training rows for series-csv; the remaining rows form the test split.
    #[arg(long)]
    train_rows: Option<usize>,
    /// Treat the first CSV row as data rather than a header.
    #[arg(long)]
    no_header: bool,
}

/// "clean" or a non-negative standard deviation.
fn parse_noise(s: &str) -> Result<f64, String> {
    if s == "clean" {
        return Ok(0.0);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected \"clean\" or a non-negative number, got {s:?}")),
    }
}

enum CliError {
    Usage(String),
    Numeric(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Numeric failures get their own exit code so scripted callers can retry
/// with different settings instead of treating them as bad input.
fn lib_exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::DegenerateWeights => 3,
        _ => 2,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            std::process::exit(3);
        }
        Err(CliError::Lib(err)) => {
            eprintln!("error: {err}");
            std::process::exit(lib_exit_code(&err));
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    fs::create_dir_all(&cli.output_dir).map_err(Error::from)?;
    let out = cli.output_dir.as_path();
    match &cli.command {
        Command::Generate { protocol, train_noise, test_noise, train_out, test_out } => {
            cmd_generate(out, cli.seed, *protocol, *train_noise, *test_noise, train_out, test_out)
        }
        Command::Init(args) => cmd_init(out, args),
        Command::Train(args) => cmd_train(out, cli.config.as_deref(), args),
        Command::Predict { model, data, target, no_header, out: out_name } => {
            cmd_predict(out, model, data, *target, *no_header, out_name)
        }
        Command::Bench(args) => cmd_bench(out, cli.seed, cli.config.as_deref(), args),
        Command::CheckGrad { rules, inputs, samples, tolerance } => {
            cmd_check_grad(cli.seed, *rules, *inputs, *samples, *tolerance)
        }
    }
}

fn cmd_generate(
    out_dir: &Path,
    seed: u64,
    what: GeneratedData,
    train_noise: f64,
    test_noise: f64,
    train_out: &str,
    test_out: &str,
) -> CliResult<()> {
    let reg = Registry::embedded();
    let cell = NoiseCell { train_std: train_noise, test_std: test_noise };
    let spec = match what {
        GeneratedData::TwoHump => ExperimentSpec::two_hump(&reg, vec![cell], 1, seed),
        GeneratedData::MackeyGlass => ExperimentSpec::mackey_glass(&reg, vec![cell], 1, seed),
    };
    let (train, test) = spec.recipe.build(train_noise, test_noise, seed, spec.noise_scope)?;
    for (ds, name) in [(&train, train_out), (&test, test_out)] {
        let path = out_dir.join(name);
        data::save_csv(ds, &path)?;
        println!("wrote {} ({} rows, {} inputs)", path.display(), ds.len(), ds.dims());
    }
    Ok(())
}

fn cmd_init(out_dir: &Path, args: &DataArgs) -> CliResult<()> {
    let prep = prepare(args)?;
    let model = SavedModel::new(prep.network, prep.normalization)?;
    let path = out_dir.join(&args.model);
    model.save(&path)?;
    print_model_summary(&model.network);
    let preds = model.predict(&prep.raw.inputs)?;
    println!("train rmse {}", bench::rmse(&preds, &prep.raw.targets)?);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(out_dir: &Path, cfg_path: Option<&Path>, args: &TrainArgs) -> CliResult<()> {
    let cfg = load_config(cfg_path)?;
    let prep = prepare(&args.data)?;
    let started = Instant::now();
    let result = train::fit(&prep.network, &prep.fitted, &cfg)?;
    let wall = started.elapsed().as_secs_f64();

    let model = SavedModel::new(result.network, prep.normalization)?;
    let model_path = out_dir.join(&args.data.model);
    model.save(&model_path)?;
    let history_path = out_dir.join(&args.history);
    result.history.write_csv(&history_path)?;

    print_model_summary(&model.network);
    println!("initial monitor rmse {}", result.history.initial_rmse);
    println!("best monitor rmse {}", result.history.best_rmse);
    // Same route a later `predict` on this file takes, so the numbers agree.
    let preds = model.predict(&prep.raw.inputs)?;
    println!("train rmse {}", bench::rmse(&preds, &prep.raw.targets)?);
    println!("wrote {}", model_path.display());
    println!("wrote {}", history_path.display());
    println!("wall {wall:.1}s");
    Ok(())
}

fn cmd_predict(
    out_dir: &Path,
    model_path: &Path,
    data_path: &Path,
    target: Option<usize>,
    no_header: bool,
    out_name: &str,
) -> CliResult<()> {
    let model = SavedModel::load(model_path)?;
    let rows = read_table(data_path, !no_header)?;
    let cols = rows[0].len();
    let n = model.network.inputs();

    // A table with exactly the model's input arity carries no targets.
    let (inputs, targets) = if target.is_some() || cols > n {
        let ds = dataset_from_table(&rows, target.unwrap_or(cols - 1))?;
        if ds.dims() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: ds.dims(), what: "input columns" }.into());
        }
        (ds.inputs, Some(ds.targets))
    } else if cols == n {
        (DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]), None)
    } else {
        return Err(Error::DimensionMismatch { expected: n, actual: cols, what: "input columns" }.into());
    };

    let preds = model.predict(&inputs)?;
    let out_path = out_dir.join(out_name);
    write_predictions(&out_path, &inputs, targets.as_ref(), &preds)?;
    if let Some(t) = &targets {
        println!("rmse {}", bench::rmse(&preds, t)?);
    }
    println!("wrote {} ({} rows)", out_path.display(), preds.len());
    Ok(())
}

fn cmd_bench(out_dir: &Path, seed: u64, cfg_path: Option<&Path>, args: &BenchArgs) -> CliResult<()> {
    let reg = Registry::embedded();
    let cell = NoiseCell { train_std: args.train_noise, test_std: args.test_noise };
    let mut spec = match args.protocol {
        Protocol::TwoHump => ExperimentSpec::two_hump(&reg, vec![cell], args.repetitions.unwrap_or(5), seed),
        Protocol::MackeyGlass => {
            ExperimentSpec::mackey_glass(&reg, vec![cell], args.repetitions.unwrap_or(5), seed)
        }
        Protocol::BoxJenkins => {
            require_clean(cell)?;
            let mut spec = ExperimentSpec::box_jenkins(&reg, require_csv(&args.csv, "box-jenkins")?, seed);
            if args.no_header {
                if let DataRecipe::MultiSeriesCsv { has_header, .. } = &mut spec.recipe {
                    *has_header = false;
                }
            }
            if let Some(reps) = args.repetitions {
                spec.repetitions = reps;
            }
            spec
        }
        Protocol::SeriesCsv => {
            require_clean(cell)?;
            let train_rows = args
                .train_rows
                .ok_or_else(|| CliError::Usage("series-csv needs --train-rows".into()))?;
            ExperimentSpec {
                name: "series-csv".into(),
                recipe: DataRecipe::SeriesCsv {
                    path: require_csv(&args.csv, "series-csv")?.to_string(),
                    column: args.column,
                    has_header: !args.no_header,
                    lags: args.lags.clone(),
                    horizon: args.horizon,
                    train_rows,
                },
                rules: 3,
                epsilon_delta: 0.1,
                normalization: NormMode::MinMax01,
                noise_scope: NoiseScope::Both,
                train: TrainConfig::default(),
                noise_grid: vec![cell],
                repetitions: args.repetitions.unwrap_or(1),
                base_seed: seed,
                registry_version: 0,
            }
        }
    };
    if let Some(rules) = args.rules {
        spec.rules = rules;
    }
    if cfg_path.is_some() {
        spec.train = load_config(cfg_path)?;
    }

    let report = bench::run_experiment(&spec, Some(out_dir))?;
    print!("{}", bench::render_report_table(&report));
    println!("wall {:.1}s", report.wall_secs);
    println!("artifacts in {}", out_dir.display());

    if report.cells.iter().all(|c| c.rmse_mean.is_none()) {
        let first = report
            .cells
            .iter()
            .flat_map(|c| c.failures.iter())
            .next()
            .cloned()
            .unwrap_or_else(|| "no repetitions ran".into());
        return Err(Error::Config(format!("every repetition failed; first failure: {first}")).into());
    }
    Ok(())
}

fn cmd_check_grad(seed: u64, rules: usize, inputs: usize, samples: usize, tolerance: f64) -> CliResult<()> {
    if rules == 0 || inputs == 0 || samples == 0 {
        return Err(CliError::Usage("rules, inputs, and samples must all be positive".into()));
    }
    if !tolerance.is_finite() || tolerance <= 0.0 {
        return Err(CliError::Usage("tolerance must be positive".into()));
    }
    let (net, ds) = train::certification_case(seed, rules, inputs, samples);
    let mut worst: f64 = 0.0;
    for group in GROUP_ORDER {
        let analytic = train::jacobian(&net, &ds, group)?;
        let fd = train::fd_jacobian(&net, &ds, group, 1e-6)?;
        let mut group_worst: f64 = 0.0;
        let mut skipped = 0usize;
        for k in 0..ds.len() {
            let x = ds.row(k);
            for p in 0..analytic.ncols() {
                if train::kink_sensitive(&net, &x, group, p, 1e-6) {
                    skipped += 1;
                    continue;
                }
                let a = analytic[(k, p)];
                let f = fd[(k, p)];
                // The magnitude floor turns the comparison absolute below
                // 1e-3, i.e. deviations under 1e-7 pass at the default
                // tolerance.
                let denom = a.abs().max(f.abs()).max(1e-3);
                group_worst = group_worst.max((a - f).abs() / denom);
            }
        }
        let note = if skipped > 0 {
            format!(" ({skipped} entries near a branch boundary skipped)")
        } else {
            String::new()
        };
        println!("{:<14} max relative deviation {:.3e}{}", group.name(), group_worst, note);
        worst = worst.max(group_worst);
    }
    println!("overall max relative deviation {worst:.3e} (tolerance {tolerance:.0e})");
    if worst < tolerance {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "max relative deviation {worst:.3e} exceeds tolerance {tolerance:.0e}"
        )))
    }
}

struct Prepared {
    /// Data in original units.
    raw: Dataset,
    /// Data the network sees: normalized when scaling was requested.
    fitted: Dataset,
    normalization: Option<Normalization>,
    network: Network,
}

fn prepare(args: &DataArgs) -> CliResult<Prepared> {
    let rows = read_table(&args.data, !args.no_header)?;
    let raw = dataset_from_table(&rows, args.target.unwrap_or(rows[0].len() - 1))?;
    let normalization = match args.normalize.mode() {
        None => None,
        Some(mode) => Some(Normalization::fit(&raw, mode)?),
    };
    let fitted = match &normalization {
        None => raw.clone(),
        Some(norm) => norm.apply(&raw)?,
    };
    let network = initialize(&fitted, args.rules, args.epsilon_delta)?;
    Ok(Prepared { raw, fitted, normalization, network })
}

fn print_model_summary(net: &Network) {
    println!("rules {}", net.rules.len());
    println!("inputs {}", net.inputs());
    println!("parameters {}", network::param_count(net.rules.len(), net.inputs()));
}

fn load_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    let cfg: TrainConfig = match path {
        None => TrainConfig::default(),
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(Error::from)?).map_err(Error::from)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn csv_error(path: &Path, row: Option<usize>, column: Option<usize>, message: String) -> Error {
    Error::Csv { path: path.display().to_string(), row, column, message }
}

/// Reads a whole numeric table row-major; the first row fixes the width.
fn read_table(path: &Path, has_header: bool) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, None, None, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1 + has_header as usize;
        let record = record.map_err(|e| csv_error(path, Some(row_no), None, e.to_string()))?;
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| csv_error(path, Some(row_no), Some(c + 1), format!("not a number: {field:?}")))?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                let msg = format!("expected {} fields, got {}", first.len(), row.len());
                return Err(csv_error(path, Some(row_no), None, msg).into());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_error(path, None, None, "no data rows".into()).into());
    }
    Ok(rows)
}

fn dataset_from_table(rows: &[Vec<f64>], target: usize) -> CliResult<Dataset> {
    let cols = rows[0].len();
    if cols < 2 {
        return Err(CliError::Usage(
            "data needs at least one input column and one target column".into(),
        ));
    }
    if target >= cols {
        return Err(CliError::Usage(format!("target column {target} out of range for {cols} columns")));
    }
    let inputs = DMatrix::from_fn(rows.len(), cols - 1, |r, c| {
        let c = if c >= target { c + 1 } else { c };
        rows[r][c]
    });
    let targets = DVector::from_fn(rows.len(), |r, _| rows[r][target]);
    Ok(Dataset::new(inputs, targets)?)
}

fn write_predictions(
    path: &Path,
    inputs: &DMatrix<f64>,
    targets: Option<&DVector<f64>>,
    preds: &DVector<f64>,
) -> CliResult<()> {
    use std::io::Write;
    let file = fs::File::create(path).map_err(Error::from)?;
    let mut w = std::io::BufWriter::new(file);
    let mut io = || -> std::io::Result<()> {
        let mut header: Vec<String> = (1..=inputs.ncols()).map(|c| format!("x{c}")).collect();
        if targets.is_some() {
            header.push("y".into());
        }
        header.push("y_pred".into());
        writeln!(w, "{}", header.join(","))?;
        for r in 0..inputs.nrows() {
            let mut fields: Vec<String> = (0..inputs.ncols()).map(|c| inputs[(r, c)].to_string()).collect();
            if let Some(t) = targets {
                fields.push(t[r].to_string());
            }
            fields.push(preds[r].to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    };
    io().map_err(Error::from)?;
    Ok(())
}

fn require_clean(cell: NoiseCell) -> CliResult<()> {
    if cell.train_std != 0.0 || cell.test_std != 0.0 {
        return Err(CliError::Usage(
            "noise options apply to generated-data protocols only".into(),
        ));
    }
    Ok(())
}

fn require_csv<'a>(csv: &'a Option<PathBuf>, what: &str) -> CliResult<&'a str> {
    match csv {
        Some(p) => p
            .to_str()
            .ok_or_else(|| CliError::Usage("csv path must be valid UTF-8".into())),
        None => Err(CliError::Usage(format!("{what} needs --csv"))),
    }
}
