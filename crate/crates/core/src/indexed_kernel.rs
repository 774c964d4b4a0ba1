//! Kernels conditioned on the discretized index level: `Q_ij(v; t)`.
//!
//! The same estimator serves the moving-average (ISMC) and EWMA (WISMC)
//! models; they differ only in the [`IndexSeries`] supplied. The level of a
//! sojourn starting at `T_n` is the level of `U_n`, the index value on
//! entering the state.

use sha2::{Digest, Sha256};

use crate::discretization::IndexGrid;
use crate::error::{Error, Result};
use crate::index::IndexSeries;
use crate::scalar::Real;
use crate::smc::{kernel_from_counts, max_sojourn, MarkovRenewalSample, SemiMarkovKernel};

pub const DEFAULT_BACKOFF_THRESHOLD: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedEstimateOptions {
    /// `None` uses the longest observed sojourn.
    pub t_max: Option<usize>,
    /// Cells `(i, v)` with fewer exits use the unconditional row.
    pub backoff_threshold: u64,
    /// Allow states without any exit, using the uniform fallback row.
    pub fallback_rows: bool,
}

impl Default for IndexedEstimateOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            backoff_threshold: DEFAULT_BACKOFF_THRESHOLD,
            fallback_rows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedKernel<F> {
    grid: IndexGrid<F>,
    /// One empirical kernel per index level, from that level's transitions only.
    levels: Vec<SemiMarkovKernel<F>>,
    /// Kernel of all transitions pooled over levels.
    unconditional: SemiMarkovKernel<F>,
    /// `[i * L + v]`
    backed_off: Vec<bool>,
    backoff_threshold: u64,
    /// Index value used before any sojourn has completed.
    index_initial: F,
}

impl<F: Real> IndexedKernel<F> {
    /// Assembles a kernel from per-level count tables laid out like
    /// [`crate::smc::KernelCounts::by_sojourn`].
    pub fn from_level_counts(
        num_states: usize,
        t_max: usize,
        grid: IndexGrid<F>,
        level_counts: Vec<Vec<u64>>,
        backoff_threshold: u64,
        fallback_rows: bool,
        index_initial: F,
    ) -> Result<Self> {
        let width = t_max + 1;
        let size = num_states * num_states * width;
        if level_counts.len() != grid.num_levels() || level_counts.iter().any(|c| c.len() != size) {
            return Err(Error::Format("level count tables do not match the grid".into()));
        }
        let mut pooled = vec![0u64; size];
        for counts in &level_counts {
            for (acc, &c) in pooled.iter_mut().zip(counts) {
                *acc += c;
            }
        }
        let unconditional = SemiMarkovKernel::from_counts(num_states, t_max, pooled, fallback_rows)?;
        if !fallback_rows {
            if let Some(i) = (0..num_states).find(|&i| !unconditional.is_observed(i)) {
                return Err(Error::UnobservedState { state: i });
            }
        }
        let levels: Vec<SemiMarkovKernel<F>> = level_counts
            .into_iter()
            .map(|c| kernel_from_counts(num_states, t_max, c, false))
            .collect();
        let num_levels = levels.len();
        let mut backed_off = vec![false; num_states * num_levels];
        for i in 0..num_states {
            for (v, level) in levels.iter().enumerate() {
                let exits = level.counts().expect("empirical").exits[i];
                backed_off[i * num_levels + v] = exits < backoff_threshold.max(1);
            }
        }
        Ok(Self {
            grid,
            levels,
            unconditional,
            backed_off,
            backoff_threshold,
            index_initial,
        })
    }

    /// Assembles a kernel from explicit per-level kernels, with no back-off.
    /// The unconditional kernel is their equal-weight mixture.
    pub fn from_level_kernels(grid: IndexGrid<F>, levels: Vec<SemiMarkovKernel<F>>, index_initial: F) -> Result<Self> {
        if levels.len() != grid.num_levels() {
            return Err(Error::Config(format!(
                "{} level kernels for a {}-level grid",
                levels.len(),
                grid.num_levels()
            )));
        }
        let unconditional = SemiMarkovKernel::mixture(&levels.iter().collect::<Vec<_>>())?;
        for (v, level) in levels.iter().enumerate() {
            for i in 0..level.num_states() {
                if !level.is_observed(i) {
                    return Err(Error::Config(format!("row {i} of level {v} is empty")));
                }
            }
        }
        let backed_off = vec![false; unconditional.num_states() * levels.len()];
        Ok(Self {
            grid,
            levels,
            unconditional,
            backed_off,
            backoff_threshold: 0,
            index_initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.unconditional.num_states()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn t_max(&self) -> usize {
        self.unconditional.t_max()
    }

    pub fn grid(&self) -> &IndexGrid<F> {
        &self.grid
    }

    pub fn backoff_threshold(&self) -> u64 {
        self.backoff_threshold
    }

    pub fn index_initial(&self) -> F {
        self.index_initial
    }

    /// The pooled kernel used for backed-off cells.
    pub fn unconditional(&self) -> &SemiMarkovKernel<F> {
        &self.unconditional
    }

    /// Raw per-level kernel, before back-off.
    pub fn level_kernel(&self, v: usize) -> &SemiMarkovKernel<F> {
        &self.levels[v]
    }

    /// Count table of level `v`; empty for kernels built from explicit laws.
    pub fn level_counts(&self, v: usize) -> &[u64] {
        self.levels[v].counts().map_or(&[][..], |c| &c.by_sojourn)
    }

    pub fn cell_count(&self, i: usize, v: usize) -> u64 {
        self.levels[v].counts().map_or(0, |c| c.exits[i])
    }

    pub fn is_backed_off(&self, i: usize, v: usize) -> bool {
        self.backed_off[i * self.num_levels() + v]
    }

    fn check(&self, i: usize, j: usize, v: usize) -> Result<()> {
        if i >= self.num_states() || j >= self.num_states() || v >= self.num_levels() {
            return Err(Error::Usage(format!(
                "cell ({i}, {j}, level {v}) out of range for {} states × {} levels",
                self.num_states(),
                self.num_levels()
            )));
        }
        Ok(())
    }

    /// Kernel whose row `i` is in force for level `v`.
    pub(crate) fn effective(&self, i: usize, v: usize) -> &SemiMarkovKernel<F> {
        if self.is_backed_off(i, v) {
            &self.unconditional
        } else {
            &self.levels[v]
        }
    }

    /// `Q_ij(v; t)` before back-off.
    pub fn raw_q(&self, i: usize, j: usize, v: usize, t: usize) -> Result<F> {
        self.check(i, j, v)?;
        self.levels[v].q(i, j, t)
    }

    pub fn q(&self, i: usize, j: usize, v: usize, t: usize) -> Result<F> {
        self.check(i, j, v)?;
        self.effective(i, v).q(i, j, t)
    }

    pub fn p(&self, i: usize, j: usize, v: usize) -> Result<F> {
        self.check(i, j, v)?;
        self.effective(i, v).p(i, j)
    }

    /// `H_i(v; t) = Σ_j Q_ij(v; t)`
    pub fn indexed_h(&self, i: usize, v: usize, t: usize) -> Result<F> {
        self.check(i, 0, v)?;
        self.effective(i, v).h_of(i, t)
    }

    /// `G_ij(v; t) = Q_ij(v; t) / p_ij(v)`, or 1 where `p_ij(v) = 0`.
    pub fn indexed_g(&self, i: usize, j: usize, v: usize, t: usize) -> Result<F> {
        self.check(i, j, v)?;
        self.effective(i, v).g_of(i, j, t)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.grid.thresholds {
            h.update(c.as_f64().to_bits().to_le_bytes());
        }
        for level in &self.levels {
            h.update(level.fingerprint().as_bytes());
        }
        h.update(self.backoff_threshold.to_le_bytes());
        h.update(self.unconditional.fingerprint().as_bytes());
        h.update(self.index_initial.as_f64().to_bits().to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Counts transitions per `(i, v)` cell, `v` being the level of `U_n` at
/// the jump into `i`.
pub fn estimate_indexed_kernel<F: Real>(
    sample: &MarkovRenewalSample,
    index: &IndexSeries<F>,
    grid: &IndexGrid<F>,
    opts: IndexedEstimateOptions,
) -> Result<IndexedKernel<F>> {
    if index.values.len() != sample.len() {
        return Err(Error::Usage(format!(
            "{} index values for {} jumps",
            index.values.len(),
            sample.len()
        )));
    }
    let longest = max_sojourn(sample) as usize;
    if longest == 0 {
        return Err(Error::Numerical("sample has no completed transition".into()));
    }
    let t_max = opts.t_max.unwrap_or(longest);
    if t_max < longest {
        return Err(Error::Usage(format!(
            "t_max {t_max} is below the longest observed sojourn {longest}"
        )));
    }
    let s = sample.num_states;
    let width = t_max + 1;
    let mut level_counts = vec![vec![0u64; s * s * width]; grid.num_levels()];
    for tr in sample.transitions() {
        let v = grid.level_of(index.values[tr.n]);
        level_counts[v][(tr.from * s + tr.to) * width + tr.sojourn as usize] += 1;
    }
    IndexedKernel::from_level_counts(
        s,
        t_max,
        grid.clone(),
        level_counts,
        opts.backoff_threshold,
        opts.fallback_rows,
        index.initial,
    )
}
