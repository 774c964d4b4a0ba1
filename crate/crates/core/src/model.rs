//! Fitting a model kind to a state series and simulating from the fit.

use serde::{Deserialize, Serialize};

use crate::discretization::{fit_index_grid, ReturnGrid, StateSeries};
use crate::error::Result;
use crate::index::{compute_index, IndexConfig};
use crate::indexed_kernel::{estimate_indexed_kernel, IndexedEstimateOptions, IndexedKernel};
use crate::scalar::Real;
use crate::simulate::{simulate_indexed_replication, simulate_smc_replication, SimulationConfig, Trajectory};
use crate::smc::{estimate_kernel, extract_mrp, ExtractOptions, SemiMarkovKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Plain semi-Markov chain.
    Smc,
    /// Indexed kernel; moving-average index for ISMC, EWMA for WISMC.
    Indexed(IndexConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub extract: ExtractOptions,
    pub t_max: Option<usize>,
    pub index_levels: usize,
    pub backoff_threshold: u64,
    pub fallback_rows: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            extract: ExtractOptions::default(),
            t_max: None,
            index_levels: 5,
            backoff_threshold: crate::indexed_kernel::DEFAULT_BACKOFF_THRESHOLD,
            fallback_rows: false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel<F> {
    Smc {
        kernel: SemiMarkovKernel<F>,
        grid: ReturnGrid<F>,
    },
    Indexed {
        kernel: IndexedKernel<F>,
        config: IndexConfig,
        grid: ReturnGrid<F>,
    },
}

pub fn fit_model<F: Real>(data: &StateSeries<F>, kind: &ModelKind, opts: &FitOptions) -> Result<FittedModel<F>> {
    let sample = extract_mrp(data, opts.extract)?;
    match kind {
        ModelKind::Smc => Ok(FittedModel::Smc {
            kernel: estimate_kernel(&sample, opts.t_max, opts.fallback_rows)?,
            grid: data.grid.clone(),
        }),
        ModelKind::Indexed(config) => {
            let index = compute_index(&sample, config, &data.grid.state_values)?;
            let grid = fit_index_grid(&index.values, opts.index_levels)?;
            let kernel = estimate_indexed_kernel(
                &sample,
                &index,
                &grid,
                IndexedEstimateOptions {
                    t_max: opts.t_max,
                    backoff_threshold: opts.backoff_threshold,
                    fallback_rows: opts.fallback_rows,
                },
            )?;
            Ok(FittedModel::Indexed {
                kernel,
                config: *config,
                grid: data.grid.clone(),
            })
        }
    }
}

impl<F: Real> FittedModel<F> {
    pub fn grid(&self) -> &ReturnGrid<F> {
        match self {
            FittedModel::Smc { grid, .. } | FittedModel::Indexed { grid, .. } => grid,
        }
    }

    pub fn simulate(&self, cfg: &SimulationConfig, replication: u64) -> Result<Trajectory<F>> {
        match self {
            FittedModel::Smc { kernel, .. } => simulate_smc_replication(kernel, cfg, replication),
            FittedModel::Indexed { kernel, config, grid } => {
                simulate_indexed_replication(kernel, config, &grid.state_values, cfg, replication)
            }
        }
    }

    /// Minute state values `Z(t)` of one replication.
    pub fn simulate_values(&self, cfg: &SimulationConfig, replication: u64) -> Result<Vec<F>> {
        let traj = self.simulate(cfg, replication)?;
        let values = &self.grid().state_values;
        Ok(traj.minute_states().into_iter().map(|s| values[s]).collect())
    }
}
