//! Memory indices driving the indexed kernels.
//!
//! * moving average (ISMC): duration-weighted average of the reward rate
//!   `f(J)` over the last `m + 1` sojourns,
//! * EWMA (WISMC): `Σ_a λ^{T_n - a} f(Z(a)) / Σ_a λ^{T_n - a}` over every past
//!   minute `a < T_n`,
//! * windowed EWMA: the same restricted to the last `m` sojourns.
//!
//! Integrals over sojourns are unit-step sums over whole minutes. `U_0` (and
//! any index before the first completed sojourn) is the configured initial
//! value. Until `m + 1` sojourns exist the moving average runs over all the
//! history there is.
//!
//! Between jumps the two families use different conventions. The moving
//! average at `t = T_n` averages the `m + 1` sojourns completed before `T_n`,
//! and strictly inside a sojourn it averages the running sojourn plus the `m`
//! completed ones before it. The EWMA simply extends its sum to every minute
//! before `t`. Both agree with `U_n` at `t = T_n`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::smc::MarkovRenewalSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IndexKind {
    MovingAverage { m: usize },
    Ewma { lambda: f64 },
    EwmaWindowed { lambda: f64, m: usize },
}

/// Reward rate `f(j)` as a function of the state value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateFunction {
    #[default]
    SquaredValue,
    AbsoluteValue,
}

impl RateFunction {
    pub fn apply<F: Real>(self, value: F) -> F {
        match self {
            RateFunction::SquaredValue => value * value,
            RateFunction::AbsoluteValue => value.abs(),
        }
    }

    pub fn rates<F: Real>(self, state_values: &[F]) -> Vec<F> {
        state_values.iter().map(|&v| self.apply(v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    #[serde(flatten)]
    pub kind: IndexKind,
    #[serde(default)]
    pub rate: RateFunction,
    /// Pre-sample index value; `None` uses the mean of `f(J_n)` over the sample.
    #[serde(default)]
    pub initial: Option<f64>,
}

impl IndexConfig {
    pub fn moving_average(m: usize) -> Self {
        Self::of(IndexKind::MovingAverage { m })
    }

    pub fn ewma(lambda: f64) -> Self {
        Self::of(IndexKind::Ewma { lambda })
    }

    pub fn ewma_windowed(lambda: f64, m: usize) -> Self {
        Self::of(IndexKind::EwmaWindowed { lambda, m })
    }

    fn of(kind: IndexKind) -> Self {
        Self {
            kind,
            rate: RateFunction::SquaredValue,
            initial: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_initial(mut self, u0: f64) -> Self {
        self.initial = Some(u0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check_m = |m: usize| {
            if m == 0 {
                Err(Error::Config("index window m must be at least 1".into()))
            } else {
                Ok(())
            }
        };
        let check_lambda = |l: f64| {
            if l > 0.0 && l <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("lambda must lie in (0, 1], got {l}")))
            }
        };
        match self.kind {
            IndexKind::MovingAverage { m } => check_m(m)?,
            IndexKind::Ewma { lambda } => check_lambda(lambda)?,
            IndexKind::EwmaWindowed { lambda, m } => {
                check_m(m)?;
                check_lambda(lambda)?
            }
        }
        if let Some(u0) = self.initial {
            if !u0.is_finite() {
                return Err(Error::Config("initial index value must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            IndexKind::MovingAverage { .. } => "moving-average",
            IndexKind::Ewma { .. } => "ewma",
            IndexKind::EwmaWindowed { .. } => "ewma-windowed",
        }
    }

    /// The initial value for `sample`: explicit, or the mean of `f(J_n)`.
    pub fn initial_for<F: Real>(&self, sample: &MarkovRenewalSample, state_values: &[F]) -> F {
        match self.initial {
            Some(u0) => F::of(u0),
            None => {
                let rates = self.rate.rates(state_values);
                let total: F = sample.states.iter().map(|&s| rates[s]).sum();
                total / F::of_usize(sample.len())
            }
        }
    }

    pub(crate) fn tracker<F: Real>(&self, initial: F) -> IndexTracker<F> {
        match self.kind {
            IndexKind::MovingAverage { m } => IndexTracker::MovingAverage(MovingAverage::new(m + 1, initial)),
            IndexKind::Ewma { lambda } => IndexTracker::Ewma(Ewma::new(F::of(lambda), initial)),
            IndexKind::EwmaWindowed { lambda, m } => {
                IndexTracker::Windowed(WindowedEwma::new(F::of(lambda), m, initial))
            }
        }
    }
}

/// `Σ_{i=1}^{len} λ^i`
#[inline]
pub(crate) fn geometric_weight<F: Real>(lambda: F, len: u64) -> F {
    if lambda == F::one() {
        F::of_u64(len)
    } else {
        lambda * (F::one() - lambda.powi(len as i32)) / (F::one() - lambda)
    }
}

const RESYNC_EVERY: usize = 1024;

#[derive(Debug, Clone)]
pub(crate) struct MovingAverage<F> {
    window: usize,
    initial: F,
    sojourns: VecDeque<(F, u64)>,
    weighted: F,
    duration: u64,
    since_resync: usize,
}

impl<F: Real> MovingAverage<F> {
    fn new(window: usize, initial: F) -> Self {
        Self {
            window,
            initial,
            sojourns: VecDeque::with_capacity(window + 1),
            weighted: F::zero(),
            duration: 0,
            since_resync: 0,
        }
    }

    fn push(&mut self, rate: F, len: u64) {
        self.sojourns.push_back((rate, len));
        self.weighted = self.weighted + rate * F::of_u64(len);
        self.duration += len;
        if self.sojourns.len() > self.window {
            let (r, l) = self.sojourns.pop_front().expect("non-empty");
            self.weighted = self.weighted - r * F::of_u64(l);
            self.duration -= l;
            self.since_resync += 1;
            if self.since_resync >= RESYNC_EVERY {
                self.weighted = self.sojourns.iter().map(|&(r, l)| r * F::of_u64(l)).sum();
                self.since_resync = 0;
            }
        }
    }

    fn value(&self) -> F {
        if self.duration == 0 {
            self.initial
        } else {
            self.weighted / F::of_u64(self.duration)
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Ewma<F> {
    lambda: F,
    initial: F,
    num: F,
    den: F,
}

impl<F: Real> Ewma<F> {
    fn new(lambda: F, initial: F) -> Self {
        Self {
            lambda,
            initial,
            num: F::zero(),
            den: F::zero(),
        }
    }

    fn push(&mut self, rate: F, len: u64) {
        let decay = self.lambda.powi(len as i32);
        let w = geometric_weight(self.lambda, len);
        self.num = decay * self.num + rate * w;
        self.den = decay * self.den + w;
    }

    fn value(&self) -> F {
        if self.den == F::zero() {
            self.initial
        } else {
            self.num / self.den
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct WindowedEwma<F> {
    lambda: F,
    window: usize,
    initial: F,
    sojourns: VecDeque<(F, u64)>,
    /// Total duration currently in the window.
    span: u64,
    num: F,
    den: F,
    since_resync: usize,
}

impl<F: Real> WindowedEwma<F> {
    fn new(lambda: F, window: usize, initial: F) -> Self {
        Self {
            lambda,
            window,
            initial,
            sojourns: VecDeque::with_capacity(window + 1),
            span: 0,
            num: F::zero(),
            den: F::zero(),
            since_resync: 0,
        }
    }

    fn push(&mut self, rate: F, len: u64) {
        let decay = self.lambda.powi(len as i32);
        let w = geometric_weight(self.lambda, len);
        self.num = decay * self.num + rate * w;
        self.den = decay * self.den + w;
        self.sojourns.push_back((rate, len));
        self.span += len;
        if self.sojourns.len() > self.window {
            let (r, l) = self.sojourns.pop_front().expect("non-empty");
            self.span -= l;
            // The dropped sojourn ended `span` minutes ago.
            let w_old = self.lambda.powi(self.span.min(i32::MAX as u64) as i32) * geometric_weight(self.lambda, l);
            self.num = self.num - r * w_old;
            self.den = self.den - w_old;
            self.since_resync += 1;
            if self.since_resync >= RESYNC_EVERY {
                self.resync();
            }
        }
    }

    fn resync(&mut self) {
        let mut num = F::zero();
        let mut den = F::zero();
        for &(r, l) in &self.sojourns {
            let decay = self.lambda.powi(l as i32);
            let w = geometric_weight(self.lambda, l);
            num = decay * num + r * w;
            den = decay * den + w;
        }
        self.num = num;
        self.den = den;
        self.since_resync = 0;
    }

    fn value(&self) -> F {
        if self.sojourns.is_empty() || self.den <= F::zero() {
            self.initial
        } else {
            self.num / self.den
        }
    }
}

/// Streaming index: `value()` is the index at the current jump epoch,
/// `push` appends the sojourn that just completed.
#[derive(Debug, Clone)]
pub(crate) enum IndexTracker<F> {
    MovingAverage(MovingAverage<F>),
    Ewma(Ewma<F>),
    Windowed(WindowedEwma<F>),
}

impl<F: Real> IndexTracker<F> {
    #[inline]
    pub(crate) fn push(&mut self, rate: F, len: u64) {
        match self {
            IndexTracker::MovingAverage(t) => t.push(rate, len),
            IndexTracker::Ewma(t) => t.push(rate, len),
            IndexTracker::Windowed(t) => t.push(rate, len),
        }
    }

    #[inline]
    pub(crate) fn value(&self) -> F {
        match self {
            IndexTracker::MovingAverage(t) => t.value(),
            IndexTracker::Ewma(t) => t.value(),
            IndexTracker::Windowed(t) => t.value(),
        }
    }
}

/// Index values `U_n` at every jump epoch of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries<F> {
    pub config: IndexConfig,
    pub initial: F,
    pub values: Vec<F>,
}

fn compute<F: Real>(sample: &MarkovRenewalSample, cfg: &IndexConfig, state_values: &[F]) -> Result<IndexSeries<F>> {
    cfg.validate()?;
    if state_values.len() != sample.num_states {
        return Err(Error::Usage(format!(
            "{} state values for a {}-state sample",
            state_values.len(),
            sample.num_states
        )));
    }
    let rates = cfg.rate.rates(state_values);
    let initial = cfg.initial_for(sample, state_values);
    let mut tracker = cfg.tracker(initial);
    let mut values = Vec::with_capacity(sample.len());
    for n in 0..sample.len() {
        values.push(tracker.value());
        tracker.push(rates[sample.states[n]], sample.sojourn(n));
    }
    Ok(IndexSeries {
        config: *cfg,
        initial,
        values,
    })
}

fn expect_kind(cfg: &IndexConfig, want: &str) -> Result<()> {
    if cfg.name() == want {
        Ok(())
    } else {
        Err(Error::Usage(format!("expected a {want} index config, got {}", cfg.name())))
    }
}

/// Any kind of index at every jump epoch.
pub fn compute_index<F: Real>(sample: &MarkovRenewalSample, cfg: &IndexConfig, state_values: &[F]) -> Result<IndexSeries<F>> {
    compute(sample, cfg, state_values)
}

pub fn index_ma<F: Real>(sample: &MarkovRenewalSample, cfg: &IndexConfig, state_values: &[F]) -> Result<IndexSeries<F>> {
    expect_kind(cfg, "moving-average")?;
    compute(sample, cfg, state_values)
}

pub fn index_ewma<F: Real>(sample: &MarkovRenewalSample, cfg: &IndexConfig, state_values: &[F]) -> Result<IndexSeries<F>> {
    expect_kind(cfg, "ewma")?;
    compute(sample, cfg, state_values)
}

pub fn index_ewma_windowed<F: Real>(
    sample: &MarkovRenewalSample,
    cfg: &IndexConfig,
    state_values: &[F],
) -> Result<IndexSeries<F>> {
    expect_kind(cfg, "ewma-windowed")?;
    compute(sample, cfg, state_values)
}

/// `Σ λ^{now - a}` and `Σ λ^{now - a} f` over minutes `a ∈ [start, end)`.
fn ewma_segment<F: Real>(lambda: F, rate: F, start: u64, end: u64, now: u64) -> (F, F) {
    let w = lambda.powi((now - end) as i32) * geometric_weight(lambda, end - start);
    (w * rate, w)
}

/// Index value at an arbitrary minute `t ≥ T_0`, equal to `U_n` at `t = T_n`.
pub fn index_at_time<F: Real>(
    sample: &MarkovRenewalSample,
    cfg: &IndexConfig,
    state_values: &[F],
    t: u64,
) -> Result<F> {
    cfg.validate()?;
    let first = sample.times[0];
    if t < first {
        return Err(Error::Usage(format!("time {t} precedes the first jump at {first}")));
    }
    if t > sample.end {
        return Err(Error::Usage(format!("time {t} is past the end of the sample")));
    }
    let rates = cfg.rate.rates(state_values);
    let initial = cfg.initial_for(sample, state_values);
    if t == first {
        return Ok(initial);
    }
    // Jump n = N(t) and whether t sits strictly inside its sojourn.
    let n = sample.times.partition_point(|&x| x <= t) - 1;
    let inside = t > sample.times[n];
    // Sojourn pieces before t, most recent first: (rate, start, end).
    let piece = |k: usize| {
        let end = if k == n { t } else { sample.times[k + 1] };
        (rates[sample.states[k]], sample.times[k], end)
    };
    let newest = if inside { n } else { n - 1 };
    let pieces = (0..=newest).rev().map(piece);
    let value = match cfg.kind {
        IndexKind::MovingAverage { m } => {
            let (mut num, mut den) = (F::zero(), 0u64);
            for (r, s, e) in pieces.take(m + 1) {
                num = num + r * F::of_u64(e - s);
                den += e - s;
            }
            num / F::of_u64(den)
        }
        IndexKind::Ewma { lambda } | IndexKind::EwmaWindowed { lambda, .. } => {
            let window = match cfg.kind {
                IndexKind::EwmaWindowed { m, .. } => m,
                _ => usize::MAX,
            };
            let lambda = F::of(lambda);
            let (mut num, mut den) = (F::zero(), F::zero());
            for (r, s, e) in pieces.take(window) {
                let (a, b) = ewma_segment(lambda, r, s, e, t);
                num = num + a;
                den = den + b;
            }
            if den > F::zero() {
                num / den
            } else {
                initial
            }
        }
    };
    Ok(value)
}

/// `U(t)` for every minute `t ∈ [T_0, end)`.
pub fn minute_values<F: Real>(sample: &MarkovRenewalSample, cfg: &IndexConfig, state_values: &[F]) -> Result<Vec<F>> {
    cfg.validate()?;
    let first = sample.times[0];
    if let IndexKind::Ewma { lambda } = cfg.kind {
        let lambda = F::of(lambda);
        let rates = cfg.rate.rates(state_values);
        let initial = cfg.initial_for(sample, state_values);
        let minutes = sample.expand();
        let mut out = Vec::with_capacity(minutes.len());
        let (mut num, mut den) = (F::zero(), F::zero());
        for &s in &minutes {
            out.push(if den > F::zero() { num / den } else { initial });
            num = lambda * (num + rates[s]);
            den = lambda * (den + F::one());
        }
        return Ok(out);
    }
    (first..sample.end)
        .map(|t| index_at_time(sample, cfg, state_values, t))
        .collect()
}
