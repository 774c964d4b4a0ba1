//! Plain semi-Markov chains: the Markov renewal sample `(J_n, T_n)`, the
//! empirical kernel `Q_ij(t)` with its derived quantities, the discrete
//! evolution equation for `φ_ij(t) = P[Z(t) = j | Z(0) = i]` and the
//! backward recurrence time.

use log::warn;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::discretization::StateSeries;
use crate::error::{Error, Result};
use crate::scalar::{ratio, Real};

/// How a minute state series is turned into jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractOptions {
    /// Treat every minute as a transition epoch (all sojourns equal 1).
    pub allow_self_transitions: bool,
    /// Let sojourns run across day boundaries instead of cutting them at the close.
    pub concatenate_days: bool,
}

/// The jump chain `J_n` and jump times `T_n` of a state series.
///
/// Jump `n` is the start of a sojourn in `states[n]` lasting until
/// `times[n + 1]` (or `end` for the last one). A jump listed in
/// `segment_starts` opens a new trading day: the sojourn before it was cut
/// at the close and is not an observed transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovRenewalSample {
    pub num_states: usize,
    pub states: Vec<usize>,
    pub times: Vec<u64>,
    /// One past the last observed minute.
    pub end: u64,
    pub segment_starts: Vec<usize>,
    pub allow_self_transitions: bool,
}

/// A completed sojourn `i → j` of length `sojourn` starting at jump `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub n: usize,
    pub from: usize,
    pub to: usize,
    pub sojourn: u64,
}

impl MarkovRenewalSample {
    /// A single-segment sample from explicit jumps.
    pub fn new(num_states: usize, states: Vec<usize>, times: Vec<u64>, end: u64) -> Result<Self> {
        let sample = Self {
            num_states,
            states,
            times,
            end,
            segment_starts: vec![0],
            allow_self_transitions: true,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() || self.states.len() != self.times.len() {
            return Err(Error::Usage("jump states and times must be non-empty and aligned".into()));
        }
        if !self.times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Usage("jump times are not strictly increasing".into()));
        }
        if self.end <= *self.times.last().expect("non-empty") {
            return Err(Error::Usage("sample end must follow the last jump".into()));
        }
        if let Some(&s) = self.states.iter().find(|&&s| s >= self.num_states) {
            return Err(Error::Usage(format!("state {s} out of range")));
        }
        if self.segment_starts.first() != Some(&0)
            || !self.segment_starts.windows(2).all(|w| w[0] < w[1])
            || self.segment_starts.iter().any(|&s| s >= self.states.len())
        {
            return Err(Error::Usage("invalid segment markers".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Length of the sojourn opened by jump `n`, including the censored last one.
    pub fn sojourn(&self, n: usize) -> u64 {
        self.times.get(n + 1).copied().unwrap_or(self.end) - self.times[n]
    }

    fn opens_segment(&self, n: usize) -> bool {
        self.segment_starts.binary_search(&n).is_ok()
    }

    /// Completed transitions; censored sojourns at day ends and at the
    /// sample end are skipped.
    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len().saturating_sub(1))
            .filter(move |&n| !self.opens_segment(n + 1))
            .map(move |n| Transition {
                n,
                from: self.states[n],
                to: self.states[n + 1],
                sojourn: self.times[n + 1] - self.times[n],
            })
    }

    /// Minute series `Z(t) = J_{N(t)}` over `[T_0, end)`.
    pub fn expand(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity((self.end - self.times[0]) as usize);
        for n in 0..self.len() {
            out.extend(std::iter::repeat_n(self.states[n], self.sojourn(n) as usize));
        }
        out
    }
}

pub fn extract_mrp<F: Real>(series: &StateSeries<F>, opts: ExtractOptions) -> Result<MarkovRenewalSample> {
    if series.is_empty() {
        return Err(Error::Usage("cannot extract jumps from an empty series".into()));
    }
    let mut states = Vec::new();
    let mut times = Vec::new();
    let mut segment_starts = vec![0];
    let day_ranges = series.day_ranges();
    for (d, &(start, end)) in day_ranges.iter().enumerate() {
        let fresh_segment = d == 0 || !opts.concatenate_days;
        if fresh_segment && d > 0 {
            segment_starts.push(states.len());
        }
        for t in start..end {
            let s = series.states[t];
            let jump = opts.allow_self_transitions
                || states.last() != Some(&s)
                || (fresh_segment && t == start);
            if jump {
                states.push(s);
                times.push(t as u64);
            }
        }
    }
    if states.len() == 1 {
        warn!("state series never changes state; no transitions to estimate");
    }
    let sample = MarkovRenewalSample {
        num_states: series.grid.num_states(),
        states,
        times,
        end: series.len() as u64,
        segment_starts,
        allow_self_transitions: opts.allow_self_transitions,
    };
    sample.validate()?;
    Ok(sample)
}

/// `B(t) = t - T_{N(t)}`, the time since the last jump.
pub fn backward_recurrence(sample: &MarkovRenewalSample, t: u64) -> Result<u64> {
    let first = sample.times[0];
    if t < first {
        return Err(Error::Usage(format!("time {t} precedes the first jump at {first}")));
    }
    let last = sample.times.partition_point(|&x| x <= t) - 1;
    Ok(t - sample.times[last])
}

/// Transition counts behind an empirical kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelCounts {
    /// `by_sojourn[(i * S + j) * (t_max + 1) + t]`: transitions `i → j` lasting exactly `t`.
    pub by_sojourn: Vec<u64>,
    pub exits: Vec<u64>,
}

/// A discrete-time semi-Markov kernel on `{0, …, t_max}`.
///
/// Sojourns are supported on `t ≥ 1`. Beyond `t_max` the kernel is flat:
/// `Q_ij(t) = p_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiMarkovKernel<F> {
    num_states: usize,
    t_max: usize,
    /// `b_ij(t)` laid out as `[(i * S + j) * (t_max + 1) + t]`.
    b: Vec<F>,
    /// Cumulative `Q_ij(t)`, same layout.
    q: Vec<F>,
    p: Vec<F>,
    observed: Vec<bool>,
    fallback: bool,
    counts: Option<KernelCounts>,
}

impl<F: Real> SemiMarkovKernel<F> {
    /// Kernel from an embedded matrix and conditional sojourn laws.
    /// `sojourn[i][j][k]` is `P[W = k + 1 | i → j]`; rows of `p` that are all
    /// zero are unobserved.
    pub fn from_parts(p: &[Vec<F>], sojourn: &[Vec<Vec<F>>]) -> Result<Self> {
        let s = p.len();
        if s == 0 || p.iter().any(|r| r.len() != s) || sojourn.len() != s || sojourn.iter().any(|r| r.len() != s) {
            return Err(Error::Config("kernel matrices must be square and aligned".into()));
        }
        let t_max = sojourn.iter().flatten().map(Vec::len).max().unwrap_or(0).max(1);
        let tol = F::of(1e-9);
        let mut b = vec![F::zero(); s * s * (t_max + 1)];
        let mut observed = vec![false; s];
        for i in 0..s {
            let total: F = p[i].iter().copied().sum();
            if p[i].iter().any(|&x| x < F::zero() || !x.is_finite()) {
                return Err(Error::Config(format!("row {i} has a negative or non-finite probability")));
            }
            if total == F::zero() {
                continue;
            }
            if (total - F::one()).abs() > tol {
                return Err(Error::Config(format!("row {i} sums to {total}, not 1")));
            }
            observed[i] = true;
            for j in 0..s {
                if p[i][j] == F::zero() {
                    continue;
                }
                let g = &sojourn[i][j];
                let mass: F = g.iter().copied().sum();
                if g.iter().any(|&x| x < F::zero()) || (mass - F::one()).abs() > tol {
                    return Err(Error::Config(format!("sojourn law {i}→{j} is not a distribution on t ≥ 1")));
                }
                for (k, &gk) in g.iter().enumerate() {
                    b[(i * s + j) * (t_max + 1) + k + 1] = p[i][j] * gk;
                }
            }
        }
        Ok(Self::assemble(s, t_max, b, observed, false, None))
    }

    fn assemble(
        s: usize,
        t_max: usize,
        b: Vec<F>,
        observed: Vec<bool>,
        fallback: bool,
        counts: Option<KernelCounts>,
    ) -> Self {
        let width = t_max + 1;
        let mut q = vec![F::zero(); b.len()];
        let mut p = vec![F::zero(); s * s];
        for cell in 0..s * s {
            let mut acc = F::zero();
            for t in 0..width {
                acc = acc + b[cell * width + t];
                q[cell * width + t] = acc;
            }
            p[cell] = acc;
        }
        let mut kernel = Self {
            num_states: s,
            t_max,
            b,
            q,
            p,
            observed,
            fallback,
            counts,
        };
        if fallback {
            kernel.fill_fallback_rows();
        }
        kernel
    }

    /// Unobserved rows become uniform over the other states with sojourn 1.
    fn fill_fallback_rows(&mut self) {
        let s = self.num_states;
        let width = self.t_max + 1;
        let targets = if s > 1 { s - 1 } else { 1 };
        let w = F::one() / F::of_usize(targets);
        for i in (0..s).filter(|&i| !self.observed[i]) {
            for j in 0..s {
                if s > 1 && j == i {
                    continue;
                }
                let cell = i * s + j;
                self.b[cell * width + 1] = w;
                for t in 1..width {
                    self.q[cell * width + t] = w;
                }
                self.p[cell] = w;
            }
        }
    }

    /// Returns a copy in which unobserved rows use the fallback row.
    pub fn with_fallback(mut self) -> Self {
        if !self.fallback {
            self.fallback = true;
            self.fill_fallback_rows();
        }
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn counts(&self) -> Option<&KernelCounts> {
        self.counts.as_ref()
    }

    pub fn fallback_enabled(&self) -> bool {
        self.fallback
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    /// Whether row `i` may be used for solving or sampling.
    pub fn row_usable(&self, i: usize) -> Result<()> {
        if self.observed[i] || self.fallback {
            Ok(())
        } else {
            Err(Error::UnobservedRow { state: i })
        }
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.num_states || j >= self.num_states {
            return Err(Error::Usage(format!(
                "state pair ({i}, {j}) out of range for {} states",
                self.num_states
            )));
        }
        Ok(())
    }

    #[inline]
    fn at(&self, i: usize, j: usize, t: usize) -> usize {
        (i * self.num_states + j) * (self.t_max + 1) + t
    }

    #[inline]
    pub(crate) fn b_raw(&self, i: usize, j: usize, t: usize) -> F {
        if t > self.t_max {
            F::zero()
        } else {
            self.b[self.at(i, j, t)]
        }
    }

    #[inline]
    pub(crate) fn q_raw(&self, i: usize, j: usize, t: usize) -> F {
        self.q[self.at(i, j, t.min(self.t_max))]
    }

    #[inline]
    pub(crate) fn p_raw(&self, i: usize, j: usize) -> F {
        self.p[i * self.num_states + j]
    }

    pub fn q(&self, i: usize, j: usize, t: usize) -> Result<F> {
        self.check(i, j)?;
        Ok(self.q_raw(i, j, t))
    }

    pub fn p(&self, i: usize, j: usize) -> Result<F> {
        self.check(i, j)?;
        Ok(self.p_raw(i, j))
    }

    /// Embedded transition matrix as rows.
    pub fn embedded_matrix(&self) -> Vec<Vec<F>> {
        self.p.chunks(self.num_states).map(<[F]>::to_vec).collect()
    }

    /// `b_ij(t) = Q_ij(t) - Q_ij(t - 1)`, zero at `t = 0`.
    pub fn b_of(&self, i: usize, j: usize, t: usize) -> Result<F> {
        self.check(i, j)?;
        Ok(self.b_raw(i, j, t))
    }

    /// `H_i(t) = Σ_j Q_ij(t)`, the sojourn distribution function in `i`.
    pub fn h_of(&self, i: usize, t: usize) -> Result<F> {
        self.check(i, 0)?;
        Ok((0..self.num_states).map(|j| self.q_raw(i, j, t)).sum())
    }

    /// `1 - H_i(t)`: probability the sojourn in `i` lasts beyond `t`.
    pub fn survival_of(&self, i: usize, t: usize) -> Result<F> {
        Ok(F::one() - self.h_of(i, t)?)
    }

    /// `G_ij(t) = Q_ij(t) / p_ij`, or 1 when `p_ij = 0`.
    pub fn g_of(&self, i: usize, j: usize, t: usize) -> Result<F> {
        self.check(i, j)?;
        let p = self.p_raw(i, j);
        Ok(if p == F::zero() { F::one() } else { self.q_raw(i, j, t) / p })
    }

    /// SHA-256 over the kernel's shape and masses.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_states as u64).to_le_bytes());
        h.update((self.t_max as u64).to_le_bytes());
        for x in &self.b {
            h.update(x.as_f64().to_bits().to_le_bytes());
        }
        h.update([self.fallback as u8]);
        hex::encode(h.finalize())
    }
}

/// Kernel from raw counts. Rows without exits are unobserved.
pub(crate) fn kernel_from_counts<F: Real>(
    num_states: usize,
    t_max: usize,
    by_sojourn: Vec<u64>,
    fallback: bool,
) -> SemiMarkovKernel<F> {
    let width = t_max + 1;
    let mut exits = vec![0u64; num_states];
    for i in 0..num_states {
        exits[i] = by_sojourn[i * num_states * width..(i + 1) * num_states * width].iter().sum();
    }
    let b = by_sojourn
        .iter()
        .enumerate()
        .map(|(idx, &c)| ratio(c, exits[idx / (num_states * width)]))
        .collect();
    let observed = exits.iter().map(|&e| e > 0).collect();
    SemiMarkovKernel::assemble(
        num_states,
        t_max,
        b,
        observed,
        fallback,
        Some(KernelCounts { by_sojourn, exits }),
    )
}

impl<F: Real> SemiMarkovKernel<F> {
    /// Rebuilds an empirical kernel from persisted counts.
    pub fn from_counts(num_states: usize, t_max: usize, by_sojourn: Vec<u64>, fallback: bool) -> Result<Self> {
        if by_sojourn.len() != num_states * num_states * (t_max + 1) {
            return Err(Error::Format("count table has the wrong size".into()));
        }
        if (0..num_states * num_states).any(|c| by_sojourn[c * (t_max + 1)] != 0) {
            return Err(Error::Format("zero-length sojourn in count table".into()));
        }
        Ok(kernel_from_counts(num_states, t_max, by_sojourn, fallback))
    }
}

impl<F: Real> SemiMarkovKernel<F> {
    /// Kernel from raw masses `b_ij(t)` in the storage layout; rows with no
    /// mass are unobserved.
    pub(crate) fn from_masses(num_states: usize, t_max: usize, b: Vec<F>, fallback: bool) -> Result<Self> {
        let width = t_max + 1;
        if b.len() != num_states * num_states * width {
            return Err(Error::Format("mass table has the wrong size".into()));
        }
        let observed = (0..num_states)
            .map(|i| b[i * num_states * width..(i + 1) * num_states * width].iter().any(|&x| x > F::zero()))
            .collect();
        Ok(Self::assemble(num_states, t_max, b, observed, fallback, None))
    }

    /// Raw mass `b_ij(t)` of an observed row; zero on unobserved rows even
    /// when the fallback fills them.
    pub(crate) fn observed_mass(&self, i: usize, j: usize, t: usize) -> F {
        if self.observed[i] {
            self.b_raw(i, j, t)
        } else {
            F::zero()
        }
    }

    /// Equal-weight mixture of kernels sharing states and `t_max`; a row is
    /// observed when it is observed in every component.
    pub(crate) fn mixture(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Config("empty kernel mixture".into()))?;
        if parts.iter().any(|k| k.num_states != first.num_states || k.t_max != first.t_max) {
            return Err(Error::Config("mixed kernels must share states and t_max".into()));
        }
        let w = F::one() / F::of_usize(parts.len());
        let mut b = vec![F::zero(); first.b.len()];
        for k in parts {
            for (acc, &x) in b.iter_mut().zip(&k.b) {
                *acc = *acc + w * x;
            }
        }
        let observed = (0..first.num_states).map(|i| parts.iter().all(|k| k.observed[i])).collect();
        Ok(Self::assemble(first.num_states, first.t_max, b, observed, false, None))
    }
}

/// Longest completed sojourn in the sample, 0 if there is none.
pub fn max_sojourn(sample: &MarkovRenewalSample) -> u64 {
    sample.transitions().map(|t| t.sojourn).max().unwrap_or(0)
}

/// Empirical kernel `Q̂_ij(t) = #{i → j, W ≤ t} / #{i → ·}`.
///
/// `t_max = None` uses the longest observed sojourn.
pub fn estimate_kernel<F: Real>(
    sample: &MarkovRenewalSample,
    t_max: Option<usize>,
    fallback: bool,
) -> Result<SemiMarkovKernel<F>> {
    let longest = max_sojourn(sample) as usize;
    if longest == 0 {
        return Err(Error::Numerical("sample has no completed transition".into()));
    }
    let t_max = t_max.unwrap_or(longest);
    if t_max < longest {
        return Err(Error::Usage(format!(
            "t_max {t_max} is below the longest observed sojourn {longest}"
        )));
    }
    let s = sample.num_states;
    let width = t_max + 1;
    let mut counts = vec![0u64; s * s * width];
    for tr in sample.transitions() {
        counts[(tr.from * s + tr.to) * width + tr.sojourn as usize] += 1;
    }
    let kernel = kernel_from_counts(s, t_max, counts, fallback);
    for i in (0..s).filter(|&i| !kernel.is_observed(i)) {
        warn!("state {i} has no observed exits");
    }
    Ok(kernel)
}

/// Interval transition probabilities `φ_ij(t)` for `t ∈ {0, …, horizon}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable<F> {
    num_states: usize,
    horizon: usize,
    /// `[(t * S + i) * S + j]`
    phi: Vec<F>,
}

impl<F: Real> TransitionTable<F> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn get(&self, i: usize, j: usize, t: usize) -> F {
        let s = self.num_states;
        self.phi[(t * s + i) * s + j]
    }

    pub fn row(&self, i: usize, t: usize) -> &[F] {
        let s = self.num_states;
        &self.phi[(t * s + i) * s..(t * s + i + 1) * s]
    }
}

/// Solves `φ_ij(t) = δ_ij (1 - H_i(t)) + Σ_k Σ_{τ=1..t} b_ik(τ) φ_kj(t - τ)`
/// forward in `t`; rows at each step are computed in parallel.
pub fn solve_evolution<F: Real>(kernel: &SemiMarkovKernel<F>, horizon: usize) -> Result<TransitionTable<F>> {
    let s = kernel.num_states();
    for i in 0..s {
        kernel.row_usable(i)?;
    }
    let survival: Vec<Vec<F>> = (0..s)
        .map(|i| (0..=horizon).map(|t| kernel.survival_of(i, t).expect("in range")).collect())
        .collect();
    let mut phi = vec![F::zero(); (horizon + 1) * s * s];
    for t in 0..=horizon {
        let (done, rest) = phi.split_at_mut(t * s * s);
        let slice = &mut rest[..s * s];
        let done: &[F] = done;
        slice.par_chunks_mut(s).enumerate().for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let mut acc = if i == j { survival[i][t] } else { F::zero() };
                for k in 0..s {
                    for tau in 1..=t.min(kernel.t_max()) {
                        let b = kernel.b_raw(i, k, tau);
                        if b != F::zero() {
                            acc = acc + b * done[((t - tau) * s + k) * s + j];
                        }
                    }
                }
                *out = acc;
            }
        });
    }
    Ok(TransitionTable {
        num_states: s,
        horizon,
        phi,
    })
}
