//! Return and index discretization.
//!
//! Cells are half-open and a value lying exactly on a threshold belongs to
//! the higher cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::RawReturnSeries;
use crate::scalar::Real;

/// How the return thresholds are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GridMode {
    /// Thresholds at empirical quantiles of `|r|`, mirrored about zero.
    /// `abs_levels[k]` is the probability level of the k-th positive cut.
    Quantile { abs_levels: Vec<f64> },
    /// Thresholds at `±δ/2, ±3δ/2, …`.
    FixedDelta { delta: f64 },
}

impl GridMode {
    /// Every one of the `num_states` cells gets the same target mass.
    pub fn equiprobable(num_states: usize) -> Self {
        let half = num_states / 2;
        let n = num_states as f64;
        GridMode::Quantile {
            abs_levels: (1..=half).map(|k| (2 * k - 1) as f64 / n).collect(),
        }
    }

    /// Each outer cell gets `tail` mass; the inner cells split the rest evenly.
    pub fn with_tail_mass(num_states: usize, tail: f64) -> Self {
        let half = num_states / 2;
        let inner = (1.0 - 2.0 * tail) / (num_states - 2) as f64;
        GridMode::Quantile {
            abs_levels: (1..=half)
                .map(|k| ((2 * k - 1) as f64 * inner).min(1.0 - 2.0 * tail))
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GridMode::Quantile { .. } => "quantile",
            GridMode::FixedDelta { .. } => "fixed-delta",
        }
    }
}

/// Symmetric grid over returns. States are labelled `0..num_states`, the
/// middle label is the zero-return state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnGrid<F> {
    pub mode: GridMode,
    pub thresholds: Vec<F>,
    pub state_values: Vec<F>,
}

impl<F: Real> ReturnGrid<F> {
    /// Grid with explicit state values; thresholds sit halfway between them.
    pub fn from_state_values(state_values: Vec<F>) -> Result<Self> {
        let n = state_values.len();
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::Usage(format!("need an odd number ≥ 3 of states, got {n}")));
        }
        let half = F::of(0.5);
        let thresholds = state_values
            .windows(2)
            .map(|w| (w[0] + w[1]) * half)
            .collect();
        let grid = Self {
            mode: GridMode::FixedDelta {
                delta: (state_values[n / 2 + 1] - state_values[n / 2]).as_f64(),
            },
            thresholds,
            state_values,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn num_states(&self) -> usize {
        self.state_values.len()
    }

    pub fn middle(&self) -> usize {
        self.num_states() / 2
    }

    pub fn state_of(&self, r: F) -> usize {
        self.thresholds.partition_point(|&c| c <= r)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_values.len();
        if n < 3 || n.is_multiple_of(2) || self.thresholds.len() != n - 1 {
            return Err(Error::Format(format!(
                "grid with {n} states and {} thresholds",
                self.thresholds.len()
            )));
        }
        let increasing = |v: &[F]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.thresholds) || !increasing(&self.state_values) {
            return Err(Error::Format("grid values not strictly increasing".into()));
        }
        if self.state_values[n / 2] != F::zero() {
            return Err(Error::Format("middle state value is not zero".into()));
        }
        Ok(())
    }
}

/// Cut points over index values; `thresholds.len() + 1` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexGrid<F> {
    pub thresholds: Vec<F>,
}

impl<F: Real> IndexGrid<F> {
    pub fn new(thresholds: Vec<F>) -> Result<Self> {
        if !thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Usage("index thresholds not strictly increasing".into()));
        }
        Ok(Self { thresholds })
    }

    /// The single-level grid.
    pub fn single() -> Self {
        Self {
            thresholds: Vec::new(),
        }
    }

    pub fn num_levels(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn level_of(&self, u: F) -> usize {
        self.thresholds.partition_point(|&c| c <= u)
    }
}

/// Minute states with day boundaries and the grid that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries<F> {
    pub states: Vec<usize>,
    /// Offsets at which a trading day starts; always begins with 0 when non-empty.
    pub day_starts: Vec<usize>,
    pub grid: ReturnGrid<F>,
}

impl<F: Real> StateSeries<F> {
    /// A single-day series.
    pub fn new(states: Vec<usize>, grid: ReturnGrid<F>) -> Result<Self> {
        let day_starts = if states.is_empty() { vec![] } else { vec![0] };
        Self::with_days(states, day_starts, grid)
    }

    pub fn with_days(states: Vec<usize>, day_starts: Vec<usize>, grid: ReturnGrid<F>) -> Result<Self> {
        if let Some(&s) = states.iter().find(|&&s| s >= grid.num_states()) {
            return Err(Error::Usage(format!(
                "state label {s} out of range for {} states",
                grid.num_states()
            )));
        }
        let ordered = day_starts.windows(2).all(|w| w[0] < w[1]);
        let bounded = day_starts.iter().all(|&d| d < states.len());
        if !ordered || !bounded || (!states.is_empty() && day_starts.first() != Some(&0)) {
            return Err(Error::Usage("invalid day boundary markers".into()));
        }
        Ok(Self {
            states,
            day_starts,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State values `Z(t)`.
    pub fn values(&self) -> Vec<F> {
        self.states.iter().map(|&s| self.grid.state_values[s]).collect()
    }

    /// Ranges `[start, end)` of each day.
    pub fn day_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.day_starts.len());
        for (k, &start) in self.day_starts.iter().enumerate() {
            let end = self.day_starts.get(k + 1).copied().unwrap_or(self.states.len());
            out.push((start, end));
        }
        out
    }
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of sorted data.
pub(crate) fn quantile_sorted<F: Real>(sorted: &[F], p: f64) -> F {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = F::of(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sort_values<F: Real>(values: &[F]) -> Result<Vec<F>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(sorted)
}

/// Raises each cut so the sequence is strictly increasing and above `floor`,
/// placing a moved cut halfway between two consecutive distinct data values.
fn separate_cuts<F: Real>(cuts: &mut [F], sorted: &[F], floor: Option<F>) -> Result<()> {
    let half = F::of(0.5);
    for k in 0..cuts.len() {
        let lower = if k == 0 { floor } else { Some(cuts[k - 1]) };
        let Some(lower) = lower else { continue };
        if cuts[k] > lower {
            continue;
        }
        let above = sorted.partition_point(|&x| x <= lower);
        let Some(&y) = sorted.get(above) else {
            return Err(Error::DegenerateGrid("too few distinct values for the requested cells".into()));
        };
        if k == 0 {
            // First cut only has to clear the floor.
            let base = sorted[..above].last().copied().unwrap_or(lower);
            cuts[k] = (base.max(lower) + y) * half;
            continue;
        }
        let next = sorted.partition_point(|&x| x <= y);
        let Some(&z) = sorted.get(next) else {
            return Err(Error::DegenerateGrid("too few distinct values for the requested cells".into()));
        };
        cuts[k] = (y + z) * half;
    }
    Ok(())
}

pub fn fit_return_grid<F: Real>(returns: &[F], num_states: usize, mode: GridMode) -> Result<ReturnGrid<F>> {
    if num_states < 3 || num_states.is_multiple_of(2) {
        return Err(Error::Usage(format!("need an odd number ≥ 3 of states, got {num_states}")));
    }
    let half = num_states / 2;
    let sorted = sort_values(returns)?;
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateGrid("returns have no spread".into()));
    }
    let positive_cuts: Vec<F> = match &mode {
        GridMode::FixedDelta { delta } => {
            if !(*delta > 0.0) {
                return Err(Error::Usage(format!("delta must be positive, got {delta}")));
            }
            (1..=half).map(|k| F::of((k as f64 - 0.5) * delta)).collect()
        }
        GridMode::Quantile { abs_levels } => {
            if abs_levels.len() != half || !abs_levels.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Usage(format!(
                    "quantile mode needs {half} increasing levels, got {abs_levels:?}"
                )));
            }
            let abs = sort_values(&returns.iter().map(|r| r.abs()).collect::<Vec<_>>())?;
            let mut cuts: Vec<F> = abs_levels.iter().map(|&p| quantile_sorted(&abs, p)).collect();
            separate_cuts(&mut cuts, &abs, Some(F::zero()))?;
            cuts
        }
    };
    let mut thresholds: Vec<F> = positive_cuts.iter().rev().map(|&c| -c).collect();
    thresholds.extend(positive_cuts.iter().copied());

    let state_values = match &mode {
        GridMode::FixedDelta { delta } => (0..num_states)
            .map(|s| F::of((s as f64 - half as f64) * delta))
            .collect(),
        GridMode::Quantile { .. } => {
            // Magnitude k pools |r| of states middle ± k so the values stay symmetric.
            let mut pools: Vec<Vec<F>> = vec![Vec::new(); half + 1];
            let probe = ReturnGrid {
                mode: mode.clone(),
                thresholds: thresholds.clone(),
                state_values: Vec::new(),
            };
            for &r in returns {
                let s = probe.state_of(r);
                pools[s.abs_diff(half)].push(r.abs());
            }
            let mut magnitudes = vec![F::zero(); half + 1];
            for k in 1..=half {
                let pool = &mut pools[k];
                magnitudes[k] = if pool.is_empty() {
                    let outer = positive_cuts.get(k).copied().unwrap_or(positive_cuts[k - 1] * F::of(1.5));
                    (positive_cuts[k - 1] + outer) * F::of(0.5)
                } else {
                    pool.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                    quantile_sorted(pool, 0.5)
                };
            }
            (0..num_states)
                .map(|s| {
                    let m = magnitudes[s.abs_diff(half)];
                    if s < half {
                        -m
                    } else {
                        m
                    }
                })
                .collect()
        }
    };
    let grid = ReturnGrid {
        mode,
        thresholds,
        state_values,
    };
    grid.validate().map_err(|e| Error::DegenerateGrid(e.to_string()))?;
    Ok(grid)
}

pub fn discretize_returns<F: Real>(returns: &RawReturnSeries<F>, grid: &ReturnGrid<F>) -> Result<StateSeries<F>> {
    grid.validate()?;
    let states = returns.concatenated().into_iter().map(|r| grid.state_of(r)).collect();
    let mut day_starts = returns.day_starts();
    // Days without returns carry no marker of their own.
    day_starts.dedup();
    let total = returns.len();
    day_starts.retain(|&d| d < total);
    StateSeries::with_days(states, day_starts, grid.clone())
}

/// Equal-mass quantile cut points over `values`.
pub fn fit_index_grid<F: Real>(values: &[F], num_levels: usize) -> Result<IndexGrid<F>> {
    if num_levels == 0 {
        return Err(Error::Usage("need at least one index level".into()));
    }
    let sorted = sort_values(values)?;
    if sorted.is_empty() {
        return Err(Error::DegenerateGrid("no index values".into()));
    }
    if num_levels == 1 {
        return Ok(IndexGrid::single());
    }
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateGrid("index values are constant".into()));
    }
    let mut cuts: Vec<F> = (1..num_levels)
        .map(|k| quantile_sorted(&sorted, k as f64 / num_levels as f64))
        .collect();
    separate_cuts(&mut cuts, &sorted, None)?;
    IndexGrid::new(cuts)
}
