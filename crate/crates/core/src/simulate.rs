//! Seeded Monte Carlo simulation of plain and indexed semi-Markov chains.
//!
//! Every step draws exactly two uniforms from the replication's stream, in
//! this order: one for the next state (inverse CDF over the embedded row in
//! state order), one for the sojourn (inverse CDF over `G_ij`). Replication
//! `r` of seed `s` uses stream `r` of a ChaCha8 generator keyed by `s`, so a
//! replication's output does not depend on which other replications run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::discretization::{ReturnGrid, StateSeries};
use crate::error::{Error, Result};
use crate::index::IndexConfig;
use crate::indexed_kernel::IndexedKernel;
use crate::scalar::Real;
use crate::smc::SemiMarkovKernel;

pub const GENERATOR_ID: &str = "chacha8-stream-per-replication";
pub const DEFAULT_BURN_IN: u64 = 1000;

/// How the index history is primed before the horizon clock starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warmup {
    /// Simulate this many minutes and discard them.
    BurnIn(u64),
    /// Explicit `(state, duration)` sojourns fed to the index, oldest first.
    History(Vec<(usize, u64)>),
}

impl Default for Warmup {
    fn default() -> Self {
        Warmup::BurnIn(DEFAULT_BURN_IN)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationConfig {
    pub horizon: u64,
    pub seed: u64,
    pub initial_state: usize,
    pub warmup: Warmup,
    pub replications: usize,
}

impl SimulationConfig {
    pub fn new(horizon: u64, seed: u64, initial_state: usize) -> Self {
        Self {
            horizon,
            seed,
            initial_state,
            warmup: Warmup::default(),
            replications: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("simulation horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("need at least one replication".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    pub states: Vec<usize>,
    pub times: Vec<u64>,
    pub horizon: u64,
    pub seed: u64,
    pub replication: u64,
    pub kernel_fingerprint: String,
    /// Index value at each jump, for indexed models.
    pub index_values: Option<Vec<F>>,
}

impl<F: Real> Trajectory<F> {
    /// `Z(t) = J_{N(t)}` for `t ∈ [0, horizon)`.
    pub fn minute_states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.horizon as usize);
        for n in 0..self.states.len() {
            let end = self.times.get(n + 1).copied().unwrap_or(self.horizon);
            out.extend(std::iter::repeat_n(self.states[n], (end - self.times[n]) as usize));
        }
        out
    }
}

/// Minute-level state series of a trajectory; the last sojourn is filled to the horizon.
pub fn expand_to_minutes<F: Real>(traj: &Trajectory<F>, grid: &ReturnGrid<F>) -> Result<StateSeries<F>> {
    StateSeries::new(traj.minute_states(), grid.clone())
}

pub(crate) fn stream_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Inverse-CDF tables for one kernel row.
#[derive(Debug, Clone)]
pub(crate) struct RowSampler<F> {
    cum_p: Vec<F>,
    last_positive: usize,
    /// `sojourn_cdf[j][k] = G_ij(k + 1)`
    sojourn_cdf: Vec<Vec<F>>,
}

impl<F: Real> RowSampler<F> {
    pub(crate) fn new(kernel: &SemiMarkovKernel<F>, i: usize) -> Result<Self> {
        kernel.row_usable(i)?;
        let s = kernel.num_states();
        let mut cum_p = Vec::with_capacity(s);
        let mut acc = F::zero();
        let mut last_positive = 0;
        let mut sojourn_cdf = Vec::with_capacity(s);
        for j in 0..s {
            let p = kernel.p_raw(i, j);
            acc = acc + p;
            cum_p.push(acc);
            if p > F::zero() {
                last_positive = j;
                sojourn_cdf.push((1..=kernel.t_max()).map(|t| kernel.q_raw(i, j, t) / p).collect());
            } else {
                sojourn_cdf.push(Vec::new());
            }
        }
        Ok(Self {
            cum_p,
            last_positive,
            sojourn_cdf,
        })
    }

    #[inline]
    pub(crate) fn next_state(&self, u: F) -> usize {
        self.cum_p.partition_point(|&c| c <= u).min(self.last_positive)
    }

    #[inline]
    pub(crate) fn sojourn(&self, j: usize, u: F) -> u64 {
        let cdf = &self.sojourn_cdf[j];
        (cdf.partition_point(|&g| g <= u).min(cdf.len() - 1) + 1) as u64
    }

    #[inline]
    pub(crate) fn step<R: Rng>(&self, rng: &mut R) -> (usize, u64) {
        let j = self.next_state(F::of(rng.random::<f64>()));
        let w = self.sojourn(j, F::of(rng.random::<f64>()));
        (j, w)
    }
}

/// Samplers for every row; unusable rows are kept as errors until reached.
fn row_samplers<F: Real>(kernel: &SemiMarkovKernel<F>) -> Vec<Result<RowSampler<F>>> {
    (0..kernel.num_states()).map(|i| RowSampler::new(kernel, i)).collect()
}

fn take_row<F>(rows: &[Result<RowSampler<F>>], i: usize) -> Result<&RowSampler<F>> {
    rows[i].as_ref().map_err(|_| Error::UnobservedRow { state: i })
}

fn simulate_smc_with<F: Real>(
    rows: &[Result<RowSampler<F>>],
    fingerprint: &str,
    cfg: &SimulationConfig,
    replication: u64,
) -> Result<Trajectory<F>> {
    let mut rng = stream_rng(cfg.seed, replication);
    let mut states = vec![cfg.initial_state];
    let mut times = vec![0u64];
    let mut state = cfg.initial_state;
    let mut now = 0u64;
    loop {
        let (j, w) = take_row(rows, state)?.step(&mut rng);
        now += w;
        if now >= cfg.horizon {
            break;
        }
        states.push(j);
        times.push(now);
        state = j;
    }
    Ok(Trajectory {
        states,
        times,
        horizon: cfg.horizon,
        seed: cfg.seed,
        replication,
        kernel_fingerprint: fingerprint.to_string(),
        index_values: None,
    })
}

fn check_initial(num_states: usize, cfg: &SimulationConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.initial_state >= num_states {
        return Err(Error::Config(format!(
            "initial state {} out of range for {num_states} states",
            cfg.initial_state
        )));
    }
    Ok(())
}

/// Replication `replication` of the plain semi-Markov algorithm.
pub fn simulate_smc_replication<F: Real>(
    kernel: &SemiMarkovKernel<F>,
    cfg: &SimulationConfig,
    replication: u64,
) -> Result<Trajectory<F>> {
    check_initial(kernel.num_states(), cfg)?;
    simulate_smc_with(&row_samplers(kernel), &kernel.fingerprint(), cfg, replication)
}

/// First replication: start in `initial_state` at time 0, draw the next
/// state, draw the sojourn, stop once a jump would reach the horizon.
pub fn simulate_smc<F: Real>(kernel: &SemiMarkovKernel<F>, cfg: &SimulationConfig) -> Result<Trajectory<F>> {
    simulate_smc_replication(kernel, cfg, 0)
}

/// All `cfg.replications` replications, in replication order.
pub fn simulate_smc_replications<F: Real>(
    kernel: &SemiMarkovKernel<F>,
    cfg: &SimulationConfig,
) -> Result<Vec<Trajectory<F>>> {
    check_initial(kernel.num_states(), cfg)?;
    let rows = row_samplers(kernel);
    let fingerprint = kernel.fingerprint();
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| simulate_smc_with(&rows, &fingerprint, cfg, r))
        .collect()
}

/// Precomputed samplers for every `(state, level)` cell in force.
pub(crate) struct IndexedSamplers<F> {
    num_levels: usize,
    rows: Vec<Result<RowSampler<F>>>,
}

impl<F: Real> IndexedSamplers<F> {
    pub(crate) fn new(kernel: &IndexedKernel<F>) -> Self {
        let levels = kernel.num_levels();
        let mut rows = Vec::with_capacity(kernel.num_states() * levels);
        for i in 0..kernel.num_states() {
            for v in 0..levels {
                rows.push(RowSampler::new(kernel.effective(i, v), i));
            }
        }
        Self {
            num_levels: levels,
            rows,
        }
    }

    fn row(&self, i: usize, v: usize) -> Result<&RowSampler<F>> {
        self.rows[i * self.num_levels + v]
            .as_ref()
            .map_err(|_| Error::UnobservedRow { state: i })
    }
}

fn simulate_indexed_with<F: Real>(
    kernel: &IndexedKernel<F>,
    samplers: &IndexedSamplers<F>,
    icfg: &IndexConfig,
    rates: &[F],
    fingerprint: &str,
    cfg: &SimulationConfig,
    replication: u64,
) -> Result<Trajectory<F>> {
    let initial = icfg.initial.map(F::of).unwrap_or(kernel.index_initial());
    let mut tracker = icfg.tracker(initial);
    let burn_in = match &cfg.warmup {
        Warmup::BurnIn(b) => *b,
        Warmup::History(history) => {
            for &(s, d) in history {
                if s >= rates.len() || d == 0 {
                    return Err(Error::Config(format!("invalid warm-up sojourn ({s}, {d})")));
                }
                tracker.push(rates[s], d);
            }
            0
        }
    };
    let end = burn_in + cfg.horizon;
    let mut rng = stream_rng(cfg.seed, replication);
    let grid = kernel.grid();

    let mut states = Vec::new();
    let mut times = Vec::new();
    let mut index_values = Vec::new();
    let mut state = cfg.initial_state;
    let mut now = 0u64;
    loop {
        let u = tracker.value();
        let (j, w) = samplers.row(state, grid.level_of(u))?.step(&mut rng);
        let next = now + w;
        if next > burn_in {
            // The sojourn in force at the end of the burn-in opens the trajectory.
            let start = now.max(burn_in) - burn_in;
            states.push(state);
            times.push(start);
            index_values.push(u);
        }
        tracker.push(rates[state], w);
        now = next;
        if now >= end {
            break;
        }
        state = j;
    }
    Ok(Trajectory {
        states,
        times,
        horizon: cfg.horizon,
        seed: cfg.seed,
        replication,
        kernel_fingerprint: fingerprint.to_string(),
        index_values: Some(index_values),
    })
}

fn indexed_prelude<F: Real>(
    kernel: &IndexedKernel<F>,
    icfg: &IndexConfig,
    state_values: &[F],
    cfg: &SimulationConfig,
) -> Result<Vec<F>> {
    icfg.validate()?;
    check_initial(kernel.num_states(), cfg)?;
    if state_values.len() != kernel.num_states() {
        return Err(Error::Usage(format!(
            "{} state values for a {}-state kernel",
            state_values.len(),
            kernel.num_states()
        )));
    }
    Ok(icfg.rate.rates(state_values))
}

/// Indexed simulation: at each jump the index of the simulated history is
/// discretized on the kernel's grid and selects the row in force.
pub fn simulate_indexed_replication<F: Real>(
    kernel: &IndexedKernel<F>,
    icfg: &IndexConfig,
    state_values: &[F],
    cfg: &SimulationConfig,
    replication: u64,
) -> Result<Trajectory<F>> {
    let rates = indexed_prelude(kernel, icfg, state_values, cfg)?;
    let samplers = IndexedSamplers::new(kernel);
    simulate_indexed_with(kernel, &samplers, icfg, &rates, &kernel.fingerprint(), cfg, replication)
}

pub fn simulate_indexed<F: Real>(
    kernel: &IndexedKernel<F>,
    icfg: &IndexConfig,
    state_values: &[F],
    cfg: &SimulationConfig,
) -> Result<Trajectory<F>> {
    simulate_indexed_replication(kernel, icfg, state_values, cfg, 0)
}

pub fn simulate_indexed_replications<F: Real>(
    kernel: &IndexedKernel<F>,
    icfg: &IndexConfig,
    state_values: &[F],
    cfg: &SimulationConfig,
) -> Result<Vec<Trajectory<F>>> {
    let rates = indexed_prelude(kernel, icfg, state_values, cfg)?;
    let samplers = IndexedSamplers::new(kernel);
    let fingerprint = kernel.fingerprint();
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| simulate_indexed_with(kernel, &samplers, icfg, &rates, &fingerprint, cfg, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::IndexGrid;
    use crate::index::compute_index;
    use crate::indexed_kernel::{estimate_indexed_kernel, IndexedEstimateOptions};
    use crate::smc::{estimate_kernel, MarkovRenewalSample};

    fn three_state() -> SemiMarkovKernel<f64> {
        SemiMarkovKernel::from_parts(
            &[vec![0.0, 0.6, 0.4], vec![0.5, 0.0, 0.5], vec![0.3, 0.7, 0.0]],
            &[
                vec![vec![], vec![0.5, 0.5], vec![0.2, 0.3, 0.5]],
                vec![vec![1.0], vec![], vec![0.1, 0.1, 0.1, 0.7]],
                vec![vec![0.0, 1.0], vec![0.6, 0.4], vec![]],
            ],
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_path() {
        let k = three_state();
        let cfg = SimulationConfig::new(5_000, 11, 0);
        let a = simulate_smc(&k, &cfg).unwrap();
        let b = simulate_smc(&k, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_smc(&k, &SimulationConfig::new(5_000, 12, 0)).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn replications_do_not_depend_on_the_set() {
        let k = three_state();
        let mut cfg = SimulationConfig::new(2_000, 3, 1);
        cfg.replications = 4;
        let all = simulate_smc_replications(&k, &cfg).unwrap();
        let third = simulate_smc_replication(&k, &cfg, 2).unwrap();
        assert_eq!(all[2], third);
        assert_ne!(all[0].states, all[1].states);
    }

    #[test]
    fn deterministic_self_loop() {
        let k = SemiMarkovKernel::from_parts(&[vec![1.0f64]], &[vec![vec![0.0, 1.0]]]).unwrap();
        let traj = simulate_smc(&k, &SimulationConfig::new(21, 0, 0)).unwrap();
        assert_eq!(traj.times, (0..=10).map(|n| 2 * n).collect::<Vec<u64>>());
        assert!(traj.times.iter().all(|&t| t < 21));
    }

    #[test]
    fn expansion_inverts_extraction() {
        let grid = ReturnGrid::from_state_values(vec![-1.0f64, 0.0, 1.0]).unwrap();
        let traj = Trajectory::<f64> {
            states: vec![1, 2],
            times: vec![0, 3],
            horizon: 5,
            seed: 0,
            replication: 0,
            kernel_fingerprint: String::new(),
            index_values: None,
        };
        let series = expand_to_minutes(&traj, &grid).unwrap();
        assert_eq!(series.states, vec![1, 1, 1, 2, 2]);
        let back = crate::smc::extract_mrp(&series, Default::default()).unwrap();
        assert_eq!(back.states, traj.states);
        assert_eq!(back.times, traj.times);
    }

    #[test]
    fn unobserved_row_is_reported_when_reached() {
        let sample = MarkovRenewalSample::new(3, vec![0, 1], vec![0, 2], 4).unwrap();
        let k: SemiMarkovKernel<f64> = estimate_kernel(&sample, None, false).unwrap();
        let err = simulate_smc(&k, &SimulationConfig::new(100, 0, 0)).unwrap_err();
        assert!(matches!(err, Error::UnobservedRow { state: 1 }));
        let ok = simulate_smc(&k.with_fallback(), &SimulationConfig::new(100, 0, 0)).unwrap();
        assert!(ok.times.len() > 2);
    }

    #[test]
    fn single_level_matches_plain_simulation() {
        let k = three_state();
        let mut cfg = SimulationConfig::new(20_000, 5, 0);
        let traj = simulate_smc(&k, &cfg).unwrap();
        let sample = MarkovRenewalSample::new(3, traj.states.clone(), traj.times.clone(), cfg.horizon).unwrap();
        let values = [-1.0, 0.0, 1.0];
        let icfg = IndexConfig::ewma(0.95);
        let index = compute_index(&sample, &icfg, &values).unwrap();
        let opts = IndexedEstimateOptions {
            backoff_threshold: 1,
            ..Default::default()
        };
        let ik = estimate_indexed_kernel(&sample, &index, &IndexGrid::single(), opts).unwrap();
        cfg.warmup = Warmup::BurnIn(0);
        let a = simulate_indexed(&ik, &icfg, &values, &cfg).unwrap();
        let b = simulate_smc(ik.unconditional(), &cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times, b.times);
    }

    #[test]
    fn burn_in_rebases_the_clock() {
        let k = three_state();
        let sample_traj = simulate_smc(&k, &SimulationConfig::new(20_000, 9, 0)).unwrap();
        let sample = MarkovRenewalSample::new(3, sample_traj.states, sample_traj.times, 20_000).unwrap();
        let values = [-1.0, 0.0, 1.0];
        let icfg = IndexConfig::ewma(0.9);
        let index = compute_index(&sample, &icfg, &values).unwrap();
        let grid = crate::discretization::fit_index_grid(&index.values, 2).unwrap();
        let ik = estimate_indexed_kernel(&sample, &index, &grid, IndexedEstimateOptions::default()).unwrap();
        let cfg = SimulationConfig::new(3_000, 1, 2);
        let traj = simulate_indexed(&ik, &icfg, &values, &cfg).unwrap();
        assert_eq!(traj.times[0], 0);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        assert!(*traj.times.last().unwrap() < 3_000);
        assert_eq!(traj.index_values.as_ref().unwrap().len(), traj.states.len());
        assert_eq!(traj.minute_states().len(), 3_000);
    }

    #[test]
    fn constant_history_selects_the_level_of_its_rate() {
        let k = three_state();
        let traj = simulate_smc(&k, &SimulationConfig::new(20_000, 2, 0)).unwrap();
        let sample = MarkovRenewalSample::new(3, traj.states, traj.times, 20_000).unwrap();
        let values = [-1.0, 0.0, 1.0];
        let icfg = IndexConfig::ewma(0.9);
        let index = compute_index(&sample, &icfg, &values).unwrap();
        let grid = IndexGrid::new(vec![0.5]).unwrap();
        let ik = estimate_indexed_kernel(&sample, &index, &grid, IndexedEstimateOptions::default()).unwrap();
        let mut cfg = SimulationConfig::new(100, 0, 0);
        cfg.warmup = Warmup::History(vec![(2, 30)]);
        let traj = simulate_indexed(&ik, &icfg, &values, &cfg).unwrap();
        let u0 = traj.index_values.unwrap()[0];
        assert_eq!(u0, 1.0);
        assert_eq!(grid.level_of(u0), 1);
    }
}
