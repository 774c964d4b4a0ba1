//! Oracles and fixtures shared by the integration tests. Everything here is
//! computed directly from definitions, independently of the library's
//! streaming or recursive implementations.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use semimarkov::{IndexedKernel, MarkovRenewalSample, SemiMarkovKernel};

/// A 3-state kernel with distinct sojourn shapes per transition.
pub fn reference_kernel() -> SemiMarkovKernel<f64> {
    let p = vec![
        vec![0.0, 0.6, 0.4],
        vec![0.3, 0.0, 0.7],
        vec![0.5, 0.5, 0.0],
    ];
    let z = vec![0.0];
    let sojourn = vec![
        vec![z.clone(), vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.3, 0.4]],
        vec![vec![1.0], z.clone(), vec![0.25, 0.25, 0.25, 0.25]],
        vec![vec![0.2, 0.0, 0.0, 0.0, 0.0, 0.8], vec![0.6, 0.4], z],
    ];
    SemiMarkovKernel::from_parts(&p, &sojourn).expect("valid kernel")
}

/// Random kernel on `states` states with sojourns in `1..=support`.
pub fn random_kernel(rng: &mut ChaCha8Rng, states: usize, support: usize) -> SemiMarkovKernel<f64> {
    let mut p = vec![vec![0.0; states]; states];
    let mut sojourn = vec![vec![vec![0.0; support]; states]; states];
    for i in 0..states {
        let weights: Vec<f64> = (0..states).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for j in 0..states {
            p[i][j] = weights[j] / total;
            let g: Vec<f64> = (0..support).map(|_| rng.random_range(0.0..1.0)).collect();
            let mass: f64 = g.iter().sum();
            sojourn[i][j] = g.iter().map(|x| x / mass).collect();
        }
        let fix = 1.0 - p[i].iter().sum::<f64>();
        p[i][states - 1] += fix;
    }
    SemiMarkovKernel::from_parts(&p, &sojourn).expect("valid kernel")
}

/// `G_ij(t)` for `t = 0..=t_max`.
pub fn sojourn_cdf(kernel: &SemiMarkovKernel<f64>, i: usize, j: usize) -> Vec<f64> {
    (0..=kernel.t_max()).map(|t| kernel.g_of(i, j, t).unwrap()).collect()
}

/// Sup distance between two CDFs on a common support; the shorter one is
/// extended by its last value.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let at = |c: &[f64], k: usize| c.get(k).copied().unwrap_or(*c.last().unwrap());
    (0..n).map(|k| (at(a, k) - at(b, k)).abs()).fold(0.0, f64::max)
}

/// `P[Z(t) = · | jump into i at 0]` by summing over every path of
/// `(next state, sojourn)` choices that ends after `t`.
pub fn enumerate_phi(kernel: &SemiMarkovKernel<f64>, i: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; kernel.num_states()];
    fn walk(kernel: &SemiMarkovKernel<f64>, state: usize, entered: usize, prob: f64, t: usize, out: &mut [f64]) {
        let s = kernel.num_states();
        for j in 0..s {
            for w in 1..=kernel.t_max() {
                let b = kernel.b_of(state, j, w).unwrap();
                if b == 0.0 {
                    continue;
                }
                if entered + w > t {
                    out[state] += prob * b;
                } else {
                    walk(kernel, j, entered + w, prob * b, t, out);
                }
            }
        }
    }
    walk(kernel, i, 0, 1.0, t, &mut out);
    out
}

/// Random jump sample with sojourns in `1..=max_sojourn`; consecutive
/// states differ.
pub fn random_sample(rng: &mut ChaCha8Rng, states: usize, jumps: usize, max_sojourn: u64) -> MarkovRenewalSample {
    let mut js = Vec::with_capacity(jumps);
    let mut ts = Vec::with_capacity(jumps);
    let mut t = rng.random_range(0..5u64);
    let mut prev = usize::MAX;
    for _ in 0..jumps {
        let mut s = rng.random_range(0..states);
        while s == prev {
            s = rng.random_range(0..states);
        }
        js.push(s);
        ts.push(t);
        prev = s;
        t += rng.random_range(1..=max_sojourn);
    }
    MarkovRenewalSample::new(states, js, ts, t).expect("valid sample")
}

/// EWMA index at every jump from the double sum over past minutes,
/// restricted to the last `window` sojourns.
pub fn naive_ewma(sample: &MarkovRenewalSample, values: &[f64], lambda: f64, window: usize, initial: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(sample.len());
    for n in 0..sample.len() {
        let now = sample.times[n];
        let first = n.saturating_sub(window);
        let (mut num, mut den) = (0.0, 0.0);
        // Most recent minute first so small weights are added last.
        for k in (first..n).rev() {
            let f = values[sample.states[k]].powi(2);
            let mut w = lambda.powi((now - sample.times[k + 1]) as i32);
            for _ in sample.times[k]..sample.times[k + 1] {
                w *= lambda;
                num += w * f;
                den += w;
            }
        }
        out.push(if n == 0 || den == 0.0 { initial } else { num / den });
    }
    out
}

/// Moving average over the last `m + 1` sojourns, straight from the definition.
pub fn naive_moving_average(sample: &MarkovRenewalSample, values: &[f64], m: usize, initial: f64) -> Vec<f64> {
    (0..sample.len())
        .map(|n| {
            if n == 0 {
                return initial;
            }
            let first = n.saturating_sub(m + 1);
            let mut num = 0.0;
            let mut den = 0u64;
            for k in first..n {
                let d = sample.times[k + 1] - sample.times[k];
                num += values[sample.states[k]].powi(2) * d as f64;
                den += d;
            }
            num / den as f64
        })
        .collect()
}

/// Largest gap between the exit-count-weighted mixture of per-level kernels
/// and the pooled kernel, over observed rows.
pub fn mixture_gap(kernel: &IndexedKernel<f64>) -> f64 {
    let s = kernel.num_states();
    let mut worst = 0.0f64;
    for i in 0..s {
        let total: u64 = (0..kernel.num_levels()).map(|v| kernel.cell_count(i, v)).sum();
        if total == 0 {
            continue;
        }
        for j in 0..s {
            for t in 0..=kernel.t_max() + 1 {
                let mut mix = 0.0;
                for v in 0..kernel.num_levels() {
                    let n = kernel.cell_count(i, v);
                    if n > 0 {
                        mix += n as f64 * kernel.raw_q(i, j, v, t.min(kernel.t_max())).unwrap();
                    }
                }
                let pooled = kernel.unconditional().q(i, j, t.min(kernel.t_max())).unwrap();
                worst = worst.max((mix / total as f64 - pooled).abs());
            }
        }
    }
    worst
}

/// Tick CSV covering `days` weekdays from 2024-03-04, a tick every 7-40 s
/// during 09:00-17:30 on a 0.005 price grid.
pub fn write_tick_csv(path: &Path, days: usize, seed: u64) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    writeln!(f, "timestamp,price").unwrap();
    let mut ticks: i64 = 2000;
    for d in 0..days {
        let date = chrono::NaiveDate::from_ymd_opt(2024, 3, 4).unwrap() + chrono::Days::new(d as u64);
        let mut secs = 9 * 3600 + rng.random_range(0..30);
        while secs < 17 * 3600 + 30 * 60 {
            ticks += rng.random_range(-2..=2);
            let (h, m, s) = (secs / 3600, secs / 60 % 60, secs % 60);
            writeln!(f, "{date} {h:02}:{m:02}:{s:02}.250,{:.3}", ticks as f64 * 0.005).unwrap();
            secs += rng.random_range(7..40);
        }
    }
}
