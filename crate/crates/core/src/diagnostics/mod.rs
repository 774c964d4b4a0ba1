//! Autocorrelation of returns and squared returns, and the mean squared
//! error between two autocorrelation curves.
//!
//! `Σ(τ) = Σ_t x_t x_{t+τ} / Σ_t x_t²` with `x` the globally demeaned series
//! (the biased estimator, so `|Σ(τ)| ≤ 1`). Lagged products are computed by
//! FFT. When day boundaries are honoured, pairs `(t, t + τ)` in different
//! days are left out of the numerator.

mod sweep;

pub use sweep::{simulated_acf, sweep, sweep_lambda, sweep_m, SweepConfig, SweepPoint, SweepResult};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_MAX_LAG: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcfOptions {
    pub max_lag: usize,
    /// Drop lag pairs that straddle a day boundary.
    pub exclude_day_boundaries: bool,
}

impl Default for AcfOptions {
    fn default() -> Self {
        Self {
            max_lag: DEFAULT_MAX_LAG,
            exclude_day_boundaries: false,
        }
    }
}

/// `values[τ - 1] = Σ(τ)` for `τ = 1..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfCurve<F> {
    pub values: Vec<F>,
    pub sample_size: usize,
}

impl<F: Real> AcfCurve<F> {
    pub fn max_lag(&self) -> usize {
        self.values.len()
    }

    /// `Σ(τ)` for `τ ≥ 1`.
    pub fn at(&self, lag: usize) -> F {
        self.values[lag - 1]
    }

    /// Half-width `3 / √N` of the white-noise band.
    pub fn white_noise_band(&self) -> F {
        F::of(3.0 / (self.sample_size as f64).sqrt())
    }

    /// Pointwise mean of curves on the same lag grid.
    pub fn average(curves: &[AcfCurve<F>]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::Usage("no curves to average".into()))?;
        if curves.iter().any(|c| c.max_lag() != first.max_lag()) {
            return Err(Error::Usage("curves have different lag grids".into()));
        }
        let k = F::of_usize(curves.len());
        let values = (0..first.max_lag())
            .map(|l| curves.iter().map(|c| c.values[l]).sum::<F>() / k)
            .collect();
        Ok(Self {
            values,
            sample_size: first.sample_size,
        })
    }
}

/// `Σ_t x_t x_{t+τ}` for `τ = 0..=max_lag` by zero-padded FFT.
fn lagged_products<F: Real>(x: &[F], max_lag: usize, planner: &mut FftPlanner<F>) -> Vec<F> {
    let n = x.len();
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<F>> = x.iter().map(|&v| Complex::new(v, F::zero())).collect();
    buf.resize(size, Complex::new(F::zero(), F::zero()));
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), F::zero());
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = F::one() / F::of_usize(size);
    (0..=max_lag)
        .map(|t| if t < n { buf[t].re * scale } else { F::zero() })
        .collect()
}

fn day_ranges(n: usize, day_starts: &[usize]) -> Vec<(usize, usize)> {
    let mut starts: Vec<usize> = day_starts.iter().copied().filter(|&d| d < n).collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, starts.get(k + 1).copied().unwrap_or(n)))
        .collect()
}

/// Autocorrelation of `values` up to `opts.max_lag`.
pub fn acf<F: Real>(values: &[F], day_starts: &[usize], opts: &AcfOptions) -> Result<AcfCurve<F>> {
    let n = values.len();
    if opts.max_lag == 0 || n <= opts.max_lag + 1 {
        return Err(Error::Usage(format!(
            "series of length {n} is too short for lags up to {}",
            opts.max_lag
        )));
    }
    let nf = F::of_usize(n);
    let mean = values.iter().copied().sum::<F>() / nf;
    let x: Vec<F> = values.iter().map(|&v| v - mean).collect();
    let energy: F = x.iter().map(|&v| v * v).sum();
    let scale = values.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let floor = nf * (F::of(4.0) * nf * F::epsilon() * scale).powi(2);
    if !(energy > floor) {
        return Err(Error::ZeroVariance);
    }
    let mut planner = FftPlanner::new();
    let mut sums = vec![F::zero(); opts.max_lag + 1];
    let ranges = if opts.exclude_day_boundaries {
        day_ranges(n, day_starts)
    } else {
        vec![(0, n)]
    };
    for (s, e) in ranges {
        if e > s {
            for (acc, v) in sums.iter_mut().zip(lagged_products(&x[s..e], opts.max_lag, &mut planner)) {
                *acc = *acc + v;
            }
        }
    }
    Ok(AcfCurve {
        values: sums[1..].iter().map(|&r| r / energy).collect(),
        sample_size: n,
    })
}

/// Autocorrelation of squared values `Z²`.
pub fn acf_squared<F: Real>(values: &[F], day_starts: &[usize], opts: &AcfOptions) -> Result<AcfCurve<F>> {
    let squared: Vec<F> = values.iter().map(|&v| v * v).collect();
    acf(&squared, day_starts, opts)
}

/// Autocorrelation of the values themselves.
pub fn acf_returns<F: Real>(values: &[F], day_starts: &[usize], opts: &AcfOptions) -> Result<AcfCurve<F>> {
    acf(values, day_starts, opts)
}

/// Mean over lags of the squared difference between two curves.
pub fn mse_acf<F: Real>(real: &AcfCurve<F>, synth: &AcfCurve<F>) -> Result<F> {
    if real.max_lag() != synth.max_lag() {
        return Err(Error::Usage(format!(
            "lag grids differ: {} vs {}",
            real.max_lag(),
            synth.max_lag()
        )));
    }
    let total: F = real
        .values
        .iter()
        .zip(&synth.values)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(total / F::of_usize(real.max_lag()))
}
