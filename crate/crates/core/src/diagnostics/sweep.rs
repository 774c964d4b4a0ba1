//! MSE between the data's squared-return autocorrelation and that of
//! series simulated from models fitted at each point of a parameter grid.

use rayon::prelude::*;

use super::{acf_squared, mse_acf, AcfCurve, AcfOptions};
use crate::discretization::StateSeries;
use crate::error::{Error, Result};
use crate::index::{IndexConfig, RateFunction};
use crate::model::{fit_model, FitOptions, ModelKind};
use crate::scalar::Real;
use crate::simulate::{SimulationConfig, Warmup, DEFAULT_BURN_IN};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub fit: FitOptions,
    pub acf: AcfOptions,
    pub replications: usize,
    /// Every point uses this seed (common random numbers across the grid).
    pub seed: u64,
    pub burn_in: u64,
    pub rate: RateFunction,
    /// λ used by `sweep_m` when it sweeps a windowed EWMA instead of the moving average.
    pub windowed_lambda: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            acf: AcfOptions::default(),
            replications: 10,
            seed: 7,
            burn_in: DEFAULT_BURN_IN,
            rate: RateFunction::SquaredValue,
            windowed_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<F> {
    pub value: f64,
    /// `None` when the pipeline failed at this point.
    pub mse: Option<F>,
    pub error: Option<String>,
    pub curve: Option<AcfCurve<F>>,
    pub seed: u64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<F> {
    pub parameter: String,
    pub points: Vec<SweepPoint<F>>,
    pub data_curve: AcfCurve<F>,
    /// Position in `points` of the smallest MSE.
    pub argmin: Option<usize>,
}

impl<F: Real> SweepResult<F> {
    pub fn best(&self) -> Option<&SweepPoint<F>> {
        self.argmin.map(|k| &self.points[k])
    }

    /// Whether the minimum sits strictly inside the grid.
    pub fn interior_minimum(&self) -> bool {
        matches!(self.argmin, Some(k) if k > 0 && k + 1 < self.points.len())
    }
}

/// Average squared-state autocorrelation of `cfg.replications` series
/// simulated from `kind` fitted to `data`, each as long as the data.
pub fn simulated_acf<F: Real>(data: &StateSeries<F>, kind: &ModelKind, cfg: &SweepConfig) -> Result<AcfCurve<F>> {
    let model = fit_model(data, kind, &cfg.fit)?;
    let sim = SimulationConfig {
        horizon: data.len() as u64,
        seed: cfg.seed,
        initial_state: data.states[0],
        warmup: Warmup::BurnIn(cfg.burn_in),
        replications: cfg.replications,
    };
    sim.validate()?;
    let curves = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let values = model.simulate_values(&sim, r)?;
            acf_squared(&values, &[0], &cfg.acf)
        })
        .collect::<Result<Vec<_>>>()?;
    AcfCurve::average(&curves)
}

/// Runs one point per model; failed points are recorded, not fatal.
pub fn sweep<F: Real>(
    data: &StateSeries<F>,
    parameter: &str,
    points: &[(f64, ModelKind)],
    cfg: &SweepConfig,
) -> Result<SweepResult<F>> {
    if points.is_empty() {
        return Err(Error::Usage("empty parameter grid".into()));
    }
    let data_curve = acf_squared(&data.values(), &data.day_starts, &cfg.acf)?;
    let results: Vec<SweepPoint<F>> = points
        .par_iter()
        .map(|(value, kind)| {
            let outcome = simulated_acf(data, kind, cfg).and_then(|c| Ok((mse_acf(&data_curve, &c)?, c)));
            match outcome {
                Ok((mse, curve)) => SweepPoint {
                    value: *value,
                    mse: Some(mse),
                    error: None,
                    curve: Some(curve),
                    seed: cfg.seed,
                    replications: cfg.replications,
                },
                Err(e) => {
                    log::warn!("{parameter} = {value}: {e}");
                    SweepPoint {
                        value: *value,
                        mse: None,
                        error: Some(e.to_string()),
                        curve: None,
                        seed: cfg.seed,
                        replications: cfg.replications,
                    }
                }
            }
        })
        .collect();
    let argmin = results
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.mse.map(|m| (k, m)))
        .fold(None, |best: Option<(usize, F)>, (k, m)| match best {
            Some((_, b)) if b <= m => best,
            _ => Some((k, m)),
        })
        .map(|(k, _)| k);
    Ok(SweepResult {
        parameter: parameter.to_string(),
        points: results,
        data_curve,
        argmin,
    })
}

/// MSE against memory `m` for the moving-average (ISMC) index, or for the
/// windowed EWMA when `cfg.windowed_lambda` is set.
pub fn sweep_m<F: Real>(data: &StateSeries<F>, m_grid: &[usize], cfg: &SweepConfig) -> Result<SweepResult<F>> {
    let points: Vec<(f64, ModelKind)> = m_grid
        .iter()
        .map(|&m| {
            let mut icfg = match cfg.windowed_lambda {
                Some(lambda) => IndexConfig::ewma_windowed(lambda, m),
                None => IndexConfig::moving_average(m),
            };
            icfg.rate = cfg.rate;
            (m as f64, ModelKind::Indexed(icfg))
        })
        .collect();
    sweep(data, "m", &points, cfg)
}

/// MSE against λ for the EWMA (WISMC) index.
pub fn sweep_lambda<F: Real>(data: &StateSeries<F>, lambda_grid: &[f64], cfg: &SweepConfig) -> Result<SweepResult<F>> {
    let points: Vec<(f64, ModelKind)> = lambda_grid
        .iter()
        .map(|&lambda| {
            let mut icfg = IndexConfig::ewma(lambda);
            icfg.rate = cfg.rate;
            (lambda, ModelKind::Indexed(icfg))
        })
        .collect();
    sweep(data, "lambda", &points, cfg)
}
