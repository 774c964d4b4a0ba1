use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use semimarkov::diagnostics::{acf_returns, acf_squared, sweep_lambda, sweep_m, AcfOptions, SweepConfig, DEFAULT_MAX_LAG};
use semimarkov::discretization::{discretize_returns, fit_index_grid, fit_return_grid, GridMode};
use semimarkov::index::{compute_index, minute_values, IndexConfig, RateFunction};
use semimarkov::indexed_kernel::{estimate_indexed_kernel, IndexedEstimateOptions, DEFAULT_BACKOFF_THRESHOLD};
use semimarkov::ingestion::{compute_returns, parse_ticks, resample_minutes, InputFormat, TradingCalendar};
use semimarkov::io::{self, AcfSeries, IndexFile, IndexedKernelFile, KernelFile, Manifest, ManifestEntry};
use semimarkov::model::FitOptions;
use semimarkov::pipeline::{run_pipeline, ModelChoice, RunConfig, Stage};
use semimarkov::simulate::{
    expand_to_minutes, simulate_indexed_replications, simulate_smc_replications, SimulationConfig, Warmup,
    DEFAULT_BURN_IN, GENERATOR_ID,
};
use semimarkov::smc::{estimate_kernel, extract_mrp, ExtractOptions};
use semimarkov::synthetic::{generate_synthetic, SyntheticGeneratorSpec};
use semimarkov::{Error, Result};

/// Estimation and simulation of semi-Markov models of high-frequency returns.
///
/// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
/// 4 numerical or estimation error.
#[derive(Parser)]
#[command(name = "semimarkov", version)]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample tick CSV to per-minute prices.
    Ingest(IngestArgs),
    /// Compute minute returns and map them to discrete states.
    Discretize(DiscretizeArgs),
    /// Estimate the semi-Markov kernel of a state series.
    Estimate(EstimateArgs),
    /// Compute a volatility index at every jump and every minute.
    Index(IndexArgs),
    /// Estimate the index-conditioned kernel.
    EstimateIndexed(EstimateIndexedArgs),
    /// Simulate replications from a kernel or an indexed kernel.
    Simulate(SimulateArgs),
    /// Autocorrelation of squared (or signed) state values.
    Acf(AcfArgs),
    /// MSE between data and simulated autocorrelation over a parameter grid.
    Sweep(SweepArgs),
    /// Draw a synthetic state series.
    Generate(GenerateArgs),
    /// Run the stages of a TOML run configuration.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Calendar TOML; the current Borsa Italiana session (09:00-17:27) by default.
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long, default_value = "UNKNOWN")]
    symbol: String,
    #[arg(long, default_value = "timestamp")]
    timestamp_column: String,
    #[arg(long, default_value = "price")]
    price_column: String,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// chrono format of the timestamp column.
    #[arg(long, default_value = "%Y-%m-%d %H:%M:%S%.f")]
    timestamp_format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Quantile,
    FixedDelta,
}

#[derive(Args)]
struct DiscretizeArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, value_enum, default_value = "quantile")]
    mode: ModeArg,
    /// Tick size for fixed-delta mode.
    #[arg(long)]
    delta: Option<f64>,
    /// Target mass of each outer cell in quantile mode; equiprobable cells when absent.
    #[arg(long)]
    tail_mass: Option<f64>,
    /// Leading fraction of the returns the grid is fitted on.
    #[arg(long, default_value_t = 1.0)]
    training_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct ExtractArgs {
    /// Treat every minute as a transition epoch.
    #[arg(long)]
    allow_self_transitions: bool,
    /// Let sojourns run across day boundaries.
    #[arg(long)]
    concatenate_days: bool,
}

impl ExtractArgs {
    fn options(self) -> ExtractOptions {
        ExtractOptions {
            allow_self_transitions: self.allow_self_transitions,
            concatenate_days: self.concatenate_days,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    states: PathBuf,
    /// Kernel horizon; the longest observed sojourn by default.
    #[arg(long)]
    t_max: Option<usize>,
    /// Use a uniform, unit-sojourn row for states without exits.
    #[arg(long)]
    fallback: bool,
    #[command(flatten)]
    extract: ExtractArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    MovingAverage,
    Ewma,
    EwmaWindowed,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateArg {
    Squared,
    Absolute,
}

#[derive(Args)]
struct IndexArgs {
    /// State series the jump sample is extracted from.
    #[arg(long)]
    kernel_sample: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "squared")]
    rate: RateArg,
    /// Pre-sample index value; the sample mean of f(J_n) by default.
    #[arg(long)]
    initial: Option<f64>,
    #[command(flatten)]
    extract: ExtractArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateIndexedArgs {
    #[arg(long)]
    states: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = DEFAULT_BACKOFF_THRESHOLD)]
    backoff: u64,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    fallback: bool,
    #[command(flatten)]
    extract: ExtractArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plain kernel file.
    #[arg(long, required_unless_present = "index_kernel")]
    kernel: Option<PathBuf>,
    /// Indexed kernel file; takes precedence over --kernel.
    #[arg(long)]
    index_kernel: Option<PathBuf>,
    /// Index definition TOML overriding the one stored with the indexed kernel.
    #[arg(long, requires = "index_kernel")]
    index_cfg: Option<PathBuf>,
    #[arg(long)]
    horizon: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Initial state; the zero-return state by default.
    #[arg(long)]
    initial_state: Option<usize>,
    /// Minutes simulated and discarded to prime the index.
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: u64,
    /// Output directory: one state series per replication plus manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AcfArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
    /// Signed values instead of squares.
    #[arg(long)]
    returns: bool,
    /// Drop lag pairs that straddle a day boundary.
    #[arg(long)]
    exclude_day_boundaries: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    M,
    Lambda,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: ParamArg,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    grid: String,
    /// State series of the data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = DEFAULT_BACKOFF_THRESHOLD)]
    backoff: u64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
    /// Sweep m for a windowed EWMA with this λ instead of the moving average.
    #[arg(long)]
    windowed_lambda: Option<f64>,
    #[command(flatten)]
    extract: ExtractArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator spec TOML; the bundled clustered-wismc generator when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's horizon.
    #[arg(long)]
    horizon: Option<u64>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Comma-separated stage names.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Smc,
    Ismc,
    Wismc,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { context, error }) => {
            match context {
                Some(stage) => eprintln!("error: stage `{stage}`: {error}"),
                None => eprintln!("error: {error}"),
            }
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

struct Failure {
    context: Option<String>,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { context: None, error }
    }
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(a)?,
        Command::Discretize(a) => discretize(a)?,
        Command::Estimate(a) => estimate(a)?,
        Command::Index(a) => index(a)?,
        Command::EstimateIndexed(a) => estimate_indexed(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Acf(a) => acf(a)?,
        Command::Sweep(a) => sweep(a)?,
        Command::Generate(a) => generate(a)?,
        Command::Run(a) => return run(a),
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let calendar = match &a.calendar {
        Some(p) => TradingCalendar::from_toml(&io::read_text(p)?)?,
        None => TradingCalendar::borsa_italiana(),
    };
    let format = InputFormat {
        delimiter: a.delimiter,
        timestamp_column: a.timestamp_column,
        price_column: a.price_column,
        timestamp_format: a.timestamp_format,
    };
    let file = File::open(&a.input).map_err(|e| Error::Input(format!("{}: {e}", a.input.display())))?;
    let ticks = parse_ticks::<f64, _>(BufReader::new(file), &format)?;
    if ticks.rejected > 0 {
        log::warn!("{} malformed or non-positive rows rejected", ticks.rejected);
    }
    let prices = resample_minutes(&ticks, &calendar, &a.symbol)?;
    io::write_text(&a.out, &io::write_price_series(&prices))
}

fn discretize(a: DiscretizeArgs) -> Result<()> {
    let prices = io::read_price_series::<f64>(&io::read_text(&a.prices)?)?;
    let returns = compute_returns(&prices)?;
    let mode = match a.mode {
        ModeArg::FixedDelta => GridMode::FixedDelta {
            delta: a.delta.ok_or_else(|| Error::Usage("fixed-delta mode needs --delta".into()))?,
        },
        ModeArg::Quantile => match a.tail_mass {
            Some(tail) => GridMode::with_tail_mass(a.states, tail),
            None => GridMode::equiprobable(a.states),
        },
    };
    if !(a.training_fraction > 0.0 && a.training_fraction <= 1.0) {
        return Err(Error::Usage("--training-fraction must be in (0, 1]".into()));
    }
    let all = returns.concatenated();
    let train = ((all.len() as f64 * a.training_fraction).ceil() as usize).min(all.len());
    let grid = fit_return_grid(&all[..train], a.states, mode)?;
    let states = discretize_returns(&returns, &grid)?;
    io::write_text(&a.out, &io::write_state_series(&states))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let states = io::read_state_series::<f64>(&io::read_text(&a.states)?)?;
    let sample = extract_mrp(&states, a.extract.options())?;
    let file = KernelFile {
        kernel: estimate_kernel(&sample, a.t_max, a.fallback)?,
        extract: a.extract.options(),
        state_values: states.grid.state_values.clone(),
    };
    io::write_text(&a.out, &io::write_kernel(&file))
}

fn index(a: IndexArgs) -> Result<()> {
    let states = io::read_state_series::<f64>(&io::read_text(&a.kernel_sample)?)?;
    let sample = extract_mrp(&states, a.extract.options())?;
    let need_m = || a.m.ok_or_else(|| Error::Usage("this index kind needs --m".into()));
    let need_lambda = || a.lambda.ok_or_else(|| Error::Usage("this index kind needs --lambda".into()));
    let mut cfg = match a.kind {
        KindArg::MovingAverage => IndexConfig::moving_average(need_m()?),
        KindArg::Ewma => IndexConfig::ewma(need_lambda()?),
        KindArg::EwmaWindowed => IndexConfig::ewma_windowed(need_lambda()?, need_m()?),
    };
    cfg.rate = match a.rate {
        RateArg::Squared => RateFunction::SquaredValue,
        RateArg::Absolute => RateFunction::AbsoluteValue,
    };
    cfg.initial = a.initial;
    let values = &states.grid.state_values;
    let series = compute_index(&sample, &cfg, values)?;
    let file = IndexFile {
        config: cfg,
        initial: series.initial,
        jump_times: sample.times.clone(),
        jump_states: sample.states.clone(),
        values: series.values,
        minute_values: minute_values(&sample, &cfg, values)?,
    };
    io::write_text(&a.out, &io::write_index(&file))
}

fn estimate_indexed(a: EstimateIndexedArgs) -> Result<()> {
    let states = io::read_state_series::<f64>(&io::read_text(&a.states)?)?;
    let sample = extract_mrp(&states, a.extract.options())?;
    let index = io::read_index::<f64>(&io::read_text(&a.index)?)?;
    if index.jump_times != sample.times || index.jump_states != sample.states {
        return Err(Error::Usage("the index file was not computed on this state series".into()));
    }
    let grid = fit_index_grid(&index.values, a.levels)?;
    let series = semimarkov::IndexSeries {
        config: index.config,
        initial: index.initial,
        values: index.values,
    };
    let kernel = estimate_indexed_kernel(
        &sample,
        &series,
        &grid,
        IndexedEstimateOptions {
            t_max: a.t_max,
            backoff_threshold: a.backoff,
            fallback_rows: a.fallback,
        },
    )?;
    let file = IndexedKernelFile {
        kernel,
        index: index.config,
        extract: a.extract.options(),
        state_values: states.grid.state_values.clone(),
    };
    io::write_text(&a.out, &io::write_indexed_kernel(&file)?)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = SimulationConfig {
        horizon: a.horizon,
        seed: a.seed,
        initial_state: 0,
        warmup: Warmup::BurnIn(a.burn_in),
        replications: a.reps,
    };
    let (trajectories, state_values, fingerprint) = if let Some(path) = &a.index_kernel {
        let file = io::read_indexed_kernel::<f64>(&io::read_text(path)?)?;
        let icfg = match &a.index_cfg {
            Some(p) => IndexConfig::from_toml(&io::read_text(p)?)?,
            None => file.index,
        };
        cfg.initial_state = a.initial_state.unwrap_or(file.state_values.len() / 2);
        let t = simulate_indexed_replications(&file.kernel, &icfg, &file.state_values, &cfg)?;
        (t, file.state_values, file.kernel.fingerprint())
    } else {
        let path = a.kernel.as_ref().expect("clap requires --kernel");
        let file = io::read_kernel::<f64>(&io::read_text(path)?)?;
        cfg.initial_state = a.initial_state.unwrap_or(file.state_values.len() / 2);
        let t = simulate_smc_replications(&file.kernel, &cfg)?;
        (t, file.state_values, file.kernel.fingerprint())
    };
    let grid = semimarkov::ReturnGrid::from_state_values(state_values)?;
    let mut artifacts = Vec::with_capacity(trajectories.len());
    for t in &trajectories {
        let name = format!("rep-{:04}.txt", t.replication);
        let text = io::write_state_series(&expand_to_minutes(t, &grid)?);
        io::write_text(&a.out.join(&name), &text)?;
        artifacts.push(ManifestEntry {
            path: name,
            stage: "simulate".into(),
            sha256: io::sha256_hex(text.as_bytes()),
            bytes: text.len() as u64,
        });
    }
    let description = format!(
        "kernel={fingerprint} horizon={} seed={} reps={} initial={} burn_in={}",
        a.horizon, a.seed, a.reps, cfg.initial_state, a.burn_in
    );
    let manifest = Manifest {
        format_version: io::FORMAT_VERSION,
        generator: GENERATOR_ID.into(),
        config_sha256: io::sha256_hex(description.as_bytes()),
        seed: a.seed,
        artifacts,
    };
    io::write_text(&a.out.join("manifest.json"), &manifest.to_json())
}

fn acf(a: AcfArgs) -> Result<()> {
    let series = io::read_state_series::<f64>(&io::read_text(&a.series)?)?;
    let opts = AcfOptions {
        max_lag: a.max_lag,
        exclude_day_boundaries: a.exclude_day_boundaries,
    };
    let values = series.values();
    let (curve, kind) = if a.returns {
        (acf_returns(&values, &series.day_starts, &opts)?, AcfSeries::Returns)
    } else {
        (acf_squared(&values, &series.day_starts, &opts)?, AcfSeries::Squared)
    };
    io::write_text(&a.out, &io::write_acf(&curve, kind))
}

/// `start:stop:step` (inclusive of `stop` up to rounding) or `a,b,c`.
fn parse_grid(raw: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("bad grid `{raw}`"));
    let parts: Vec<&str> = raw.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step): (f64, f64, f64) = (
                start.trim().parse().map_err(|_| bad())?,
                stop.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
            );
            if !(step > 0.0) || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
        }
        [_] => raw
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let data = io::read_state_series::<f64>(&io::read_text(&a.data)?)?;
    let grid = parse_grid(&a.grid)?;
    let cfg = SweepConfig {
        fit: FitOptions {
            extract: a.extract.options(),
            t_max: None,
            index_levels: a.levels,
            backoff_threshold: a.backoff,
            fallback_rows: false,
        },
        acf: AcfOptions {
            max_lag: a.max_lag,
            exclude_day_boundaries: false,
        },
        replications: a.reps,
        seed: a.seed,
        burn_in: a.burn_in,
        rate: RateFunction::SquaredValue,
        windowed_lambda: a.windowed_lambda,
    };
    let result = match a.param {
        ParamArg::Lambda => sweep_lambda(&data, &grid, &cfg)?,
        ParamArg::M => {
            let ms = grid
                .iter()
                .map(|&x| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(Error::Usage(format!("m = {x} is not a positive integer")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            sweep_m(&data, &ms, &cfg)?
        }
    };
    if let Some(best) = result.best() {
        log::info!("argmin {} = {}", result.parameter, best.value);
    }
    io::write_text(&a.out, &io::write_sweep(&result))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SyntheticGeneratorSpec::from_toml(&io::read_text(p)?)?,
        None => SyntheticGeneratorSpec::bundled(500_000, 1),
    };
    match &mut spec {
        SyntheticGeneratorSpec::KnownKernel { horizon, seed, .. }
        | SyntheticGeneratorSpec::ClusteredWismc { horizon, seed, .. } => {
            if let Some(h) = a.horizon {
                *horizon = h;
            }
            if let Some(s) = a.seed {
                *seed = s;
            }
        }
    }
    let states = generate_synthetic::<f64>(&spec)?;
    io::write_text(&a.out, &io::write_state_series(&states))
}

fn run(a: RunArgs) -> std::result::Result<(), Failure> {
    let mut cfg = RunConfig::from_toml(&io::read_text(&a.config)?)?;
    if let Some(dir) = a.out_dir {
        cfg.out_dir = dir;
    } else if cfg.out_dir.is_relative() {
        cfg.out_dir = a.config.parent().unwrap_or(Path::new(".")).join(&cfg.out_dir);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(model) = a.model {
        cfg.model = match model {
            ModelArg::Smc => ModelChoice::Smc,
            ModelArg::Ismc => ModelChoice::Ismc,
            ModelArg::Wismc => ModelChoice::Wismc,
        };
    }
    if a.lambda.is_some() {
        cfg.index.lambda = a.lambda;
    }
    if a.m.is_some() {
        cfg.index.m = a.m;
    }
    if let Some(reps) = a.reps {
        cfg.simulation.replications = reps;
    }
    if a.horizon.is_some() {
        cfg.simulation.horizon = a.horizon;
    }
    if !a.stages.is_empty() {
        cfg.stages = a
            .stages
            .iter()
            .map(|name| {
                Stage::ALL
                    .into_iter()
                    .find(|s| s.name() == name.trim())
                    .ok_or_else(|| Error::Usage(format!("unknown stage `{name}`")))
            })
            .collect::<Result<_>>()?;
    }
    let manifest = run_pipeline(&cfg).map_err(|e| Failure {
        context: Some(e.stage.name().to_string()),
        error: e.error,
    })?;
    for entry in &manifest.artifacts {
        println!("{}\t{}\t{}", entry.stage, entry.sha256, entry.path);
    }
    Ok(())
}
