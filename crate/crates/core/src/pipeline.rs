//! End-to-end runs driven by a TOML [`RunConfig`].
//!
//! Stages run in a fixed order and each writes one artifact to the output
//! directory. A stage whose input was not produced in the same run reads
//! it back from the output directory, so runs can be resumed stage by
//! stage. `manifest.json` lists every artifact with its SHA-256, the
//! producing stage, the config hash and the seed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{acf_squared, sweep_lambda, sweep_m, AcfCurve, AcfOptions, SweepConfig};
use crate::discretization::{discretize_returns, fit_index_grid, fit_return_grid, GridMode, StateSeries};
use crate::error::{Error, Result};
use crate::index::{compute_index, minute_values, IndexConfig, RateFunction};
use crate::indexed_kernel::{estimate_indexed_kernel, IndexedEstimateOptions, DEFAULT_BACKOFF_THRESHOLD};
use crate::ingestion::{compute_returns, parse_ticks, resample_minutes, InputFormat, PriceSeries, RawReturnSeries, TradingCalendar};
use crate::io::{self, IndexFile, IndexedKernelFile, KernelFile, Manifest, ManifestEntry};
use crate::model::{FitOptions, ModelKind};
use crate::simulate::{
    expand_to_minutes, simulate_indexed_replications, simulate_smc_replications, SimulationConfig, Trajectory, Warmup,
    DEFAULT_BURN_IN, GENERATOR_ID,
};
use crate::smc::{estimate_kernel, extract_mrp, ExtractOptions, MarkovRenewalSample};
use crate::synthetic::{generate_synthetic, SyntheticGeneratorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Generate,
    Discretize,
    Estimate,
    Index,
    EstimateIndexed,
    Simulate,
    Acf,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Generate,
        Stage::Discretize,
        Stage::Estimate,
        Stage::Index,
        Stage::EstimateIndexed,
        Stage::Simulate,
        Stage::Acf,
        Stage::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Discretize => "discretize",
            Stage::Estimate => "estimate",
            Stage::Index => "index",
            Stage::EstimateIndexed => "estimate-indexed",
            Stage::Simulate => "simulate",
            Stage::Acf => "acf",
            Stage::Sweep => "sweep",
        }
    }

    /// File name of the stage's artifact inside the output directory.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Ingest => "prices.txt",
            Stage::Generate | Stage::Discretize => "states.txt",
            Stage::Estimate => "kernel.txt",
            Stage::Index => "index.txt",
            Stage::EstimateIndexed => "indexed-kernel.txt",
            Stage::Simulate => "trajectories.txt",
            Stage::Acf => "acf.csv",
            Stage::Sweep => "sweep.csv",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Smc,
    Ismc,
    #[default]
    Wismc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickInput {
    pub path: PathBuf,
    /// Calendar TOML; the current Borsa Italiana session when absent.
    #[serde(default)]
    pub calendar: Option<PathBuf>,
    #[serde(default = "default_symbol")]
    pub symbol: String,
    #[serde(default)]
    pub format: InputFormat,
}

fn default_symbol() -> String {
    "UNKNOWN".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSettings {
    pub states: usize,
    #[serde(default)]
    pub mode: Option<GridMode>,
    /// Leading fraction of the returns the grid is fitted on.
    pub training_fraction: f64,
}

impl Default for DiscretizationSettings {
    fn default() -> Self {
        Self {
            states: 5,
            mode: None,
            training_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSettings {
    /// Longest sojourn kept by the kernel; the longest observed when absent.
    #[serde(default)]
    pub t_max: Option<usize>,
    pub allow_self_transitions: bool,
    pub concatenate_days: bool,
    pub fallback_rows: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSettings {
    /// Memory in transitions: moving-average window for ismc, optional
    /// window for wismc.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub rate: RateFunction,
    #[serde(default)]
    pub initial: Option<f64>,
    pub levels: usize,
    pub backoff_threshold: u64,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            m: None,
            lambda: None,
            rate: RateFunction::SquaredValue,
            initial: None,
            levels: 5,
            backoff_threshold: DEFAULT_BACKOFF_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    /// Minutes per replication; the data length when absent.
    #[serde(default)]
    pub horizon: Option<u64>,
    pub replications: usize,
    pub burn_in: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            horizon: None,
            replications: 10,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSettings {
    pub max_lag: usize,
    pub exclude_day_boundaries: bool,
    /// Data-side curve on raw returns instead of discretized states.
    pub raw_data: bool,
    #[serde(default)]
    pub m_grid: Vec<usize>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            max_lag: crate::diagnostics::DEFAULT_MAX_LAG,
            exclude_day_boundaries: false,
            raw_data: false,
            m_grid: Vec::new(),
            lambda_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    #[serde(default)]
    pub model: ModelChoice,
    #[serde(default)]
    pub seed: u64,
    /// Stages to run; every stage the inputs and model call for when empty.
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub ticks: Option<TickInput>,
    #[serde(default)]
    pub synthetic: Option<SyntheticGeneratorSpec>,
    #[serde(default)]
    pub discretization: DiscretizationSettings,
    #[serde(default)]
    pub estimation: EstimationSettings,
    #[serde(default)]
    pub index: IndexSettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub diagnostics: DiagnosticsSettings,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            model: ModelChoice::default(),
            seed: 0,
            stages: Vec::new(),
            ticks: None,
            synthetic: None,
            discretization: DiscretizationSettings::default(),
            estimation: EstimationSettings::default(),
            index: IndexSettings::default(),
            simulation: SimulationSettings::default(),
            diagnostics: DiagnosticsSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, leaving out `out_dir`.
    pub fn hash(&self) -> Result<String> {
        let mut located = self.clone();
        located.out_dir = PathBuf::new();
        Ok(io::sha256_hex(located.to_toml()?.as_bytes()))
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            allow_self_transitions: self.estimation.allow_self_transitions,
            concatenate_days: self.estimation.concatenate_days,
        }
    }

    /// Index definition of the configured model; `None` for smc.
    pub fn index_config(&self) -> Result<Option<IndexConfig>> {
        let ix = &self.index;
        let mut cfg = match self.model {
            ModelChoice::Smc => return Ok(None),
            ModelChoice::Ismc => {
                let m = ix.m.ok_or_else(|| Error::Config("ismc needs index.m".into()))?;
                if ix.lambda.is_some() {
                    return Err(Error::Config("index.lambda is not used by ismc".into()));
                }
                IndexConfig::moving_average(m)
            }
            ModelChoice::Wismc => {
                let lambda = ix.lambda.ok_or_else(|| Error::Config("wismc needs index.lambda".into()))?;
                match ix.m {
                    Some(m) => IndexConfig::ewma_windowed(lambda, m),
                    None => IndexConfig::ewma(lambda),
                }
            }
        };
        cfg.rate = ix.rate;
        cfg.initial = ix.initial;
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(match self.index_config()? {
            None => ModelKind::Smc,
            Some(cfg) => ModelKind::Indexed(cfg),
        })
    }

    pub fn acf_options(&self) -> AcfOptions {
        AcfOptions {
            max_lag: self.diagnostics.max_lag,
            exclude_day_boundaries: self.diagnostics.exclude_day_boundaries,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.ticks, &self.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("give either ticks or synthetic input, not both".into())),
            (None, None) if self.stages.iter().any(|s| matches!(s, Stage::Ingest | Stage::Generate)) => {
                return Err(Error::Config("no input configured".into()))
            }
            _ => {}
        }
        if self.discretization.states < 3 || self.discretization.states.is_multiple_of(2) {
            return Err(Error::Config("discretization.states must be odd and at least 3".into()));
        }
        let f = self.discretization.training_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config("discretization.training_fraction must be in (0, 1]".into()));
        }
        if self.index.levels == 0 {
            return Err(Error::Config("index.levels must be at least 1".into()));
        }
        if self.simulation.replications == 0 {
            return Err(Error::Config("simulation.replications must be at least 1".into()));
        }
        if self.stages.contains(&Stage::Sweep) {
            let grid_ok = match self.model {
                ModelChoice::Smc => false,
                ModelChoice::Ismc => !self.diagnostics.m_grid.is_empty(),
                ModelChoice::Wismc => !self.diagnostics.lambda_grid.is_empty(),
            };
            if !grid_ok {
                return Err(Error::Config("the sweep stage needs an ismc m_grid or a wismc lambda_grid".into()));
            }
        }
        self.index_config()?;
        Ok(())
    }

    /// The stages this run executes, in order.
    pub fn planned_stages(&self) -> Vec<Stage> {
        let mut stages = if self.stages.is_empty() {
            let mut s = Vec::new();
            if self.ticks.is_some() {
                s.extend([Stage::Ingest, Stage::Discretize]);
            } else if self.synthetic.is_some() {
                s.push(Stage::Generate);
            }
            s.push(Stage::Estimate);
            if self.model != ModelChoice::Smc {
                s.extend([Stage::Index, Stage::EstimateIndexed]);
            }
            s.extend([Stage::Simulate, Stage::Acf]);
            s
        } else {
            self.stages.clone()
        };
        stages.sort();
        stages.dedup();
        stages
    }
}

/// A failed run: the stage that failed and the artifacts written before it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
    pub manifest: Manifest,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Default)]
struct State {
    prices: Option<PriceSeries<f64>>,
    returns: Option<RawReturnSeries<f64>>,
    states: Option<StateSeries<f64>>,
    sample: Option<MarkovRenewalSample>,
    kernel: Option<KernelFile<f64>>,
    index: Option<IndexFile<f64>>,
    indexed: Option<IndexedKernelFile<f64>>,
    trajectories: Option<Vec<Trajectory<f64>>>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    state: State,
    manifest: Manifest,
}

impl Run<'_> {
    fn path(&self, stage: Stage) -> PathBuf {
        self.cfg.out_dir.join(stage.artifact())
    }

    fn emit(&mut self, stage: Stage, text: &str) -> Result<()> {
        let path = self.path(stage);
        io::write_text(&path, text)?;
        self.manifest.artifacts.push(ManifestEntry {
            path: stage.artifact().to_string(),
            stage: stage.name().to_string(),
            sha256: io::sha256_hex(text.as_bytes()),
            bytes: text.len() as u64,
        });
        Ok(())
    }

    fn load(&self, stage: Stage) -> Result<String> {
        let path = self.path(stage);
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} was neither produced in this run nor found in the output directory",
                path.display()
            )));
        }
        io::read_text(&path)
    }

    fn prices(&mut self) -> Result<&PriceSeries<f64>> {
        if self.state.prices.is_none() {
            self.state.prices = Some(io::read_price_series(&self.load(Stage::Ingest)?)?);
        }
        Ok(self.state.prices.as_ref().expect("loaded"))
    }

    fn states(&mut self) -> Result<&StateSeries<f64>> {
        if self.state.states.is_none() {
            self.state.states = Some(io::read_state_series(&self.load(Stage::Discretize)?)?);
        }
        Ok(self.state.states.as_ref().expect("loaded"))
    }

    fn sample(&mut self) -> Result<&MarkovRenewalSample> {
        if self.state.sample.is_none() {
            let opts = self.cfg.extract_options();
            let sample = extract_mrp(self.states()?, opts)?;
            self.state.sample = Some(sample);
        }
        Ok(self.state.sample.as_ref().expect("extracted"))
    }

    fn kernel(&mut self) -> Result<&KernelFile<f64>> {
        if self.state.kernel.is_none() {
            self.state.kernel = Some(io::read_kernel(&self.load(Stage::Estimate)?)?);
        }
        Ok(self.state.kernel.as_ref().expect("loaded"))
    }

    fn index(&mut self) -> Result<&IndexFile<f64>> {
        if self.state.index.is_none() {
            self.state.index = Some(io::read_index(&self.load(Stage::Index)?)?);
        }
        Ok(self.state.index.as_ref().expect("loaded"))
    }

    fn indexed(&mut self) -> Result<&IndexedKernelFile<f64>> {
        if self.state.indexed.is_none() {
            self.state.indexed = Some(io::read_indexed_kernel(&self.load(Stage::EstimateIndexed)?)?);
        }
        Ok(self.state.indexed.as_ref().expect("loaded"))
    }

    fn trajectories(&mut self) -> Result<&Vec<Trajectory<f64>>> {
        if self.state.trajectories.is_none() {
            let (t, _) = io::read_trajectories(&self.load(Stage::Simulate)?)?;
            self.state.trajectories = Some(t);
        }
        Ok(self.state.trajectories.as_ref().expect("loaded"))
    }

    fn returns(&mut self) -> Result<&RawReturnSeries<f64>> {
        if self.state.returns.is_none() {
            let r = compute_returns(self.prices()?)?;
            self.state.returns = Some(r);
        }
        Ok(self.state.returns.as_ref().expect("computed"))
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let cfg = self.cfg;
        match stage {
            Stage::Ingest => {
                let input = cfg
                    .ticks
                    .as_ref()
                    .ok_or_else(|| Error::Config("the ingest stage needs a [ticks] input".into()))?;
                let calendar = match &input.calendar {
                    Some(p) => TradingCalendar::from_toml(&io::read_text(p)?)?,
                    None => TradingCalendar::borsa_italiana(),
                };
                let file = fs::File::open(&input.path).map_err(|e| Error::io(&input.path, e))?;
                let ticks = parse_ticks(std::io::BufReader::new(file), &input.format)?;
                let prices = resample_minutes(&ticks, &calendar, &input.symbol)?;
                self.emit(stage, &io::write_price_series(&prices))?;
                self.state.prices = Some(prices);
            }
            Stage::Generate => {
                let spec = cfg
                    .synthetic
                    .as_ref()
                    .ok_or_else(|| Error::Config("the generate stage needs a [synthetic] spec".into()))?;
                let states = generate_synthetic::<f64>(spec)?;
                self.emit(stage, &io::write_state_series(&states))?;
                self.state.states = Some(states);
            }
            Stage::Discretize => {
                let settings = &cfg.discretization;
                let returns = self.returns()?.clone();
                let all = returns.concatenated();
                let train = ((all.len() as f64 * settings.training_fraction).ceil() as usize).min(all.len());
                let mode = settings
                    .mode
                    .clone()
                    .unwrap_or_else(|| GridMode::equiprobable(settings.states));
                let grid = fit_return_grid(&all[..train], settings.states, mode)?;
                let states = discretize_returns(&returns, &grid)?;
                self.emit(stage, &io::write_state_series(&states))?;
                self.state.states = Some(states);
            }
            Stage::Estimate => {
                let t_max = cfg.estimation.t_max;
                let fallback = cfg.estimation.fallback_rows;
                let state_values = self.states()?.grid.state_values.clone();
                let kernel = estimate_kernel(self.sample()?, t_max, fallback)?;
                let file = KernelFile {
                    kernel,
                    extract: cfg.extract_options(),
                    state_values,
                };
                self.emit(stage, &io::write_kernel(&file))?;
                self.state.kernel = Some(file);
            }
            Stage::Index => {
                let icfg = cfg
                    .index_config()?
                    .ok_or_else(|| Error::Config("the index stage needs an ismc or wismc model".into()))?;
                let values = self.states()?.grid.state_values.clone();
                let sample = self.sample()?.clone();
                let series = compute_index(&sample, &icfg, &values)?;
                let file = IndexFile {
                    config: icfg,
                    initial: series.initial,
                    jump_times: sample.times.clone(),
                    jump_states: sample.states.clone(),
                    values: series.values,
                    minute_values: minute_values(&sample, &icfg, &values)?,
                };
                self.emit(stage, &io::write_index(&file))?;
                self.state.index = Some(file);
            }
            Stage::EstimateIndexed => {
                let levels = cfg.index.levels;
                let state_values = self.states()?.grid.state_values.clone();
                let sample = self.sample()?.clone();
                let index = self.index()?.clone();
                let series = index_series_for(&sample, &index)?;
                let grid = fit_index_grid(&series.values, levels)?;
                let kernel = estimate_indexed_kernel(
                    &sample,
                    &series,
                    &grid,
                    IndexedEstimateOptions {
                        t_max: cfg.estimation.t_max,
                        backoff_threshold: cfg.index.backoff_threshold,
                        fallback_rows: cfg.estimation.fallback_rows,
                    },
                )?;
                let file = IndexedKernelFile {
                    kernel,
                    index: index.config,
                    extract: cfg.extract_options(),
                    state_values,
                };
                self.emit(stage, &io::write_indexed_kernel(&file)?)?;
                self.state.indexed = Some(file);
            }
            Stage::Simulate => {
                let data = self.states()?;
                let horizon = cfg.simulation.horizon.unwrap_or(data.len() as u64);
                let initial_state = data.states.first().copied().unwrap_or(data.grid.middle());
                let grid = data.grid.clone();
                let sim = SimulationConfig {
                    horizon,
                    seed: cfg.seed,
                    initial_state,
                    warmup: Warmup::BurnIn(cfg.simulation.burn_in),
                    replications: cfg.simulation.replications,
                };
                let trajectories = match cfg.model {
                    ModelChoice::Smc => simulate_smc_replications(&self.kernel()?.kernel, &sim)?,
                    _ => {
                        let file = self.indexed()?;
                        simulate_indexed_replications(&file.kernel, &file.index, &file.state_values, &sim)?
                    }
                };
                self.emit(stage, &io::write_trajectories(&trajectories, &grid)?)?;
                self.state.trajectories = Some(trajectories);
            }
            Stage::Acf => {
                let opts = cfg.acf_options();
                let raw = cfg.diagnostics.raw_data;
                let data_curve = if raw {
                    let r = self.returns()?;
                    acf_squared(&r.concatenated(), &r.day_starts(), &opts)?
                } else {
                    let d = self.states()?;
                    acf_squared(&d.values(), &d.day_starts, &opts)?
                };
                let grid = self.states()?.grid.clone();
                let trajectories = self.trajectories()?;
                let curves = trajectories
                    .par_iter()
                    .map(|t| {
                        let series = expand_to_minutes(t, &grid)?;
                        acf_squared(&series.values(), &[0], &opts)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let model_curve = AcfCurve::average(&curves)?;
                let mode = if raw { "raw-returns" } else { "discretized" };
                let text = io::write_acf_comparison(&data_curve, &model_curve, mode, curves.len())?;
                self.emit(stage, &text)?;
            }
            Stage::Sweep => {
                let data = self.states()?.clone();
                let sweep_cfg = SweepConfig {
                    fit: FitOptions {
                        extract: cfg.extract_options(),
                        t_max: cfg.estimation.t_max,
                        index_levels: cfg.index.levels,
                        backoff_threshold: cfg.index.backoff_threshold,
                        fallback_rows: cfg.estimation.fallback_rows,
                    },
                    acf: cfg.acf_options(),
                    replications: cfg.simulation.replications,
                    seed: cfg.seed,
                    burn_in: cfg.simulation.burn_in,
                    rate: cfg.index.rate,
                    windowed_lambda: None,
                };
                let result = match cfg.model {
                    ModelChoice::Ismc => sweep_m(&data, &cfg.diagnostics.m_grid, &sweep_cfg)?,
                    ModelChoice::Wismc => sweep_lambda(&data, &cfg.diagnostics.lambda_grid, &sweep_cfg)?,
                    ModelChoice::Smc => return Err(Error::Config("smc has no parameter to sweep".into())),
                };
                self.emit(stage, &io::write_sweep(&result))?;
            }
        }
        Ok(())
    }
}

/// Rebuilds the index series of a persisted index file, checking it was
/// computed on the same jumps as `sample`.
fn index_series_for(sample: &MarkovRenewalSample, file: &IndexFile<f64>) -> Result<crate::index::IndexSeries<f64>> {
    if file.jump_times != sample.times || file.jump_states != sample.states {
        return Err(Error::Usage("index file does not match the jumps of the state series".into()));
    }
    Ok(crate::index::IndexSeries {
        config: file.config,
        initial: file.initial,
        values: file.values.clone(),
    })
}

/// Runs the configured stages, writing artifacts and `manifest.json` into
/// `cfg.out_dir`. On failure the artifacts written so far, and a manifest
/// listing them, are kept.
pub fn run_pipeline(cfg: &RunConfig) -> std::result::Result<Manifest, StageError> {
    let stages = cfg.planned_stages();
    let first = stages.first().copied().unwrap_or(Stage::Ingest);
    let fail = |stage, error, manifest| StageError { stage, error, manifest };
    let empty = Manifest {
        format_version: io::FORMAT_VERSION,
        generator: GENERATOR_ID.to_string(),
        config_sha256: String::new(),
        seed: cfg.seed,
        artifacts: Vec::new(),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(first, e, empty));
    }
    let config_sha256 = match cfg.hash() {
        Ok(h) => h,
        Err(e) => return Err(fail(first, e, empty)),
    };
    let mut run = Run {
        cfg,
        state: State::default(),
        manifest: Manifest { config_sha256, ..empty },
    };
    for stage in stages {
        log::info!("running stage {stage}");
        if let Err(error) = run.run_stage(stage) {
            let _ = write_manifest(&cfg.out_dir, &run.manifest);
            return Err(fail(stage, error, run.manifest));
        }
    }
    if let Err(e) = write_manifest(&cfg.out_dir, &run.manifest) {
        return Err(fail(Stage::Acf, e, run.manifest));
    }
    Ok(run.manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    io::write_text(&dir.join("manifest.json"), &manifest.to_json())
}

