//! Synthetic state series from explicit kernels, for testing and demos.
//!
//! `known-kernel` draws from a plain semi-Markov kernel. `clustered-wismc`
//! draws from a two-level weighted-indexed kernel on five symmetric states
//! `{-2, -1, 0, 1, 2}·Δ` whose high-volatility level favours large moves,
//! so squared returns cluster while signed returns stay uncorrelated.

use serde::{Deserialize, Serialize};

use crate::discretization::{IndexGrid, ReturnGrid, StateSeries};
use crate::error::{Error, Result};
use crate::index::IndexConfig;
use crate::indexed_kernel::IndexedKernel;
use crate::scalar::Real;
use crate::simulate::{expand_to_minutes, simulate_indexed, simulate_smc, SimulationConfig, Warmup};
use crate::smc::SemiMarkovKernel;

/// Per-minute magnitude law of one volatility regime: `rows[a][b]` is the
/// probability that a minute with `|state| = a` is followed by one with
/// `|state| = b`.
pub type MagnitudeRows = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticGeneratorSpec {
    KnownKernel {
        /// Embedded chain rows.
        p: Vec<Vec<f64>>,
        /// `sojourn[i][j][k] = P[W = k + 1 | i → j]`.
        sojourn: Vec<Vec<Vec<f64>>>,
        state_values: Vec<f64>,
        #[serde(default)]
        initial_state: usize,
        horizon: u64,
        seed: u64,
    },
    ClusteredWismc {
        delta: f64,
        /// EWMA weight of the generating index.
        lambda: f64,
        /// Index value, in units of `Δ²`, separating the calm and volatile levels.
        threshold: f64,
        calm: MagnitudeRows,
        volatile: MagnitudeRows,
        /// Sojourns are geometric, truncated with the tail lumped at `t_max`.
        t_max: usize,
        horizon: u64,
        seed: u64,
        /// Splits the output into days of this many minutes.
        #[serde(default)]
        minutes_per_day: Option<usize>,
    },
}

impl SyntheticGeneratorSpec {
    /// The clustered-wismc generator used by the examples and tests.
    pub fn bundled(horizon: u64, seed: u64) -> Self {
        SyntheticGeneratorSpec::ClusteredWismc {
            delta: 0.0005,
            lambda: 0.97,
            threshold: 0.6,
            calm: [[0.85, 0.14, 0.01], [0.70, 0.27, 0.03], [0.60, 0.30, 0.10]],
            volatile: [[0.50, 0.35, 0.15], [0.30, 0.45, 0.25], [0.25, 0.40, 0.35]],
            t_max: 200,
            horizon,
            seed,
            minutes_per_day: None,
        }
    }

    /// A deterministic alternator between the outer states of a
    /// three-state grid: `0, 2, 0, 2, …`. The zero state is never visited.
    pub fn alternator(horizon: u64) -> Self {
        SyntheticGeneratorSpec::KnownKernel {
            p: vec![vec![0.0, 0.0, 1.0], vec![0.0; 3], vec![1.0, 0.0, 0.0]],
            sojourn: vec![
                vec![vec![], vec![], vec![1.0]],
                vec![vec![]; 3],
                vec![vec![1.0], vec![], vec![]],
            ],
            state_values: vec![-1.0, 0.0, 1.0],
            initial_state: 0,
            horizon,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator spec serializes")
    }

    pub fn seed(&self) -> u64 {
        match self {
            SyntheticGeneratorSpec::KnownKernel { seed, .. } | SyntheticGeneratorSpec::ClusteredWismc { seed, .. } => *seed,
        }
    }

    pub fn horizon(&self) -> u64 {
        match self {
            SyntheticGeneratorSpec::KnownKernel { horizon, .. }
            | SyntheticGeneratorSpec::ClusteredWismc { horizon, .. } => *horizon,
        }
    }
}

/// Five-state return grid with values `{-2, -1, 0, 1, 2}·Δ`.
pub fn five_state_grid<F: Real>(delta: f64) -> Result<ReturnGrid<F>> {
    ReturnGrid::from_state_values((-2..=2).map(|k| F::of(k as f64 * delta)).collect())
}

/// Semi-Markov kernel equivalent to a minute-level chain on the five states
/// in which magnitudes follow `rows` and nonzero signs are fair coins.
/// Self-loops become geometric sojourns.
pub fn magnitude_kernel<F: Real>(rows: &MagnitudeRows, t_max: usize) -> Result<SemiMarkovKernel<F>> {
    if t_max == 0 {
        return Err(Error::Config("t_max must be at least 1".into()));
    }
    for (a, row) in rows.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("magnitude row {a} is not a distribution")));
        }
    }
    let values: [i32; 5] = [-2, -1, 0, 1, 2];
    let minute = |x: i32, y: i32| {
        let r = rows[x.unsigned_abs() as usize][y.unsigned_abs() as usize];
        if y == 0 {
            r
        } else {
            0.5 * r
        }
    };
    let mut p = vec![vec![F::zero(); 5]; 5];
    let mut sojourn = vec![vec![Vec::new(); 5]; 5];
    for (i, &x) in values.iter().enumerate() {
        let stay = minute(x, x);
        if stay >= 1.0 {
            return Err(Error::Config(format!("state {x} is absorbing")));
        }
        let mut law = Vec::with_capacity(t_max);
        let mut tail = 1.0;
        for _ in 1..t_max {
            law.push(F::of(tail * (1.0 - stay)));
            tail *= stay;
        }
        law.push(F::of(tail));
        for (j, &y) in values.iter().enumerate() {
            if i != j {
                p[i][j] = F::of(minute(x, y) / (1.0 - stay));
                sojourn[i][j] = law.clone();
            }
        }
    }
    SemiMarkovKernel::from_parts(&p, &sojourn)
}

/// The generating two-level kernel and index of a clustered-wismc spec.
pub fn clustered_model<F: Real>(spec: &SyntheticGeneratorSpec) -> Result<(IndexedKernel<F>, IndexConfig, ReturnGrid<F>)> {
    let SyntheticGeneratorSpec::ClusteredWismc {
        delta,
        lambda,
        threshold,
        calm,
        volatile,
        t_max,
        ..
    } = spec
    else {
        return Err(Error::Config("not a clustered-wismc spec".into()));
    };
    if !(*delta > 0.0) || !(*threshold > 0.0) {
        return Err(Error::Config("delta and threshold must be positive".into()));
    }
    let grid = five_state_grid::<F>(*delta)?;
    let scale = delta * delta;
    let index_grid = IndexGrid::new(vec![F::of(threshold * scale)])?;
    let levels = vec![magnitude_kernel(calm, *t_max)?, magnitude_kernel(volatile, *t_max)?];
    let icfg = IndexConfig::ewma(*lambda).with_initial(0.5 * threshold * scale);
    icfg.validate()?;
    let kernel = IndexedKernel::from_level_kernels(index_grid, levels, F::of(0.5 * threshold * scale))?;
    Ok((kernel, icfg, grid))
}

/// Draws the state series described by `spec`.
pub fn generate_synthetic<F: Real>(spec: &SyntheticGeneratorSpec) -> Result<StateSeries<F>> {
    let (states, grid) = match spec {
        SyntheticGeneratorSpec::KnownKernel {
            p,
            sojourn,
            state_values,
            initial_state,
            horizon,
            seed,
        } => {
            let to_f = |r: &Vec<f64>| r.iter().map(|&x| F::of(x)).collect::<Vec<F>>();
            let p: Vec<Vec<F>> = p.iter().map(to_f).collect();
            let sojourn: Vec<Vec<Vec<F>>> = sojourn.iter().map(|r| r.iter().map(to_f).collect()).collect();
            let kernel = SemiMarkovKernel::from_parts(&p, &sojourn)?;
            let grid = ReturnGrid::from_state_values(state_values.iter().map(|&v| F::of(v)).collect())?;
            if grid.num_states() != kernel.num_states() {
                return Err(Error::Config("state values do not match the kernel".into()));
            }
            if *horizon == 0 {
                log::warn!("zero horizon: empty synthetic series");
                return StateSeries::new(Vec::new(), grid);
            }
            let traj = simulate_smc(&kernel, &SimulationConfig::new(*horizon, *seed, *initial_state))?;
            (expand_to_minutes(&traj, &grid)?.states, grid)
        }
        SyntheticGeneratorSpec::ClusteredWismc { horizon, seed, .. } => {
            let (kernel, icfg, grid) = clustered_model::<F>(spec)?;
            if *horizon == 0 {
                log::warn!("zero horizon: empty synthetic series");
                return StateSeries::new(Vec::new(), grid);
            }
            let mut cfg = SimulationConfig::new(*horizon, *seed, grid.middle());
            cfg.warmup = Warmup::BurnIn(crate::simulate::DEFAULT_BURN_IN);
            let traj = simulate_indexed(&kernel, &icfg, &grid.state_values, &cfg)?;
            (expand_to_minutes(&traj, &grid)?.states, grid)
        }
    };
    let day = match spec {
        SyntheticGeneratorSpec::ClusteredWismc {
            minutes_per_day: Some(d), ..
        } => *d,
        _ => 0,
    };
    if day == 0 {
        StateSeries::new(states, grid)
    } else {
        let starts = (0..states.len()).step_by(day).collect();
        StateSeries::with_days(states, starts, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternator_is_periodic() {
        let s = generate_synthetic::<f64>(&SyntheticGeneratorSpec::alternator(9)).unwrap();
        assert_eq!(s.states, vec![0, 2, 0, 2, 0, 2, 0, 2, 0]);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let s = generate_synthetic::<f64>(&SyntheticGeneratorSpec::bundled(0, 1)).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn magnitude_kernel_rows() {
        let k = magnitude_kernel::<f64>(&[[0.5, 0.4, 0.1], [0.3, 0.4, 0.3], [0.2, 0.4, 0.4]], 50).unwrap();
        // From +1: stay 0.2, to 0 w.p. 0.3, to -1 w.p. 0.2, to ±2 w.p. 0.15 each.
        let row: Vec<f64> = (0..5).map(|j| k.p(3, j).unwrap()).collect();
        let want = [0.15 / 0.8, 0.2 / 0.8, 0.3 / 0.8, 0.0, 0.15 / 0.8];
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((k.g_of(3, 2, 1).unwrap() - 0.8).abs() < 1e-12);
        assert!((k.h_of(3, 50).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_roundtrips_through_toml() {
        let spec = SyntheticGeneratorSpec::bundled(1_000, 9);
        assert_eq!(SyntheticGeneratorSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn bad_rows_are_config_errors() {
        let err = magnitude_kernel::<f64>(&[[0.5, 0.4, 0.2], [0.3, 0.4, 0.3], [0.2, 0.4, 0.4]], 10).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn seeded_output_is_reproducible() {
        let a = generate_synthetic::<f64>(&SyntheticGeneratorSpec::bundled(5_000, 3)).unwrap();
        let b = generate_synthetic::<f64>(&SyntheticGeneratorSpec::bundled(5_000, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5_000);
    }
}
