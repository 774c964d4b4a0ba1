mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semimarkov::index::{
    compute_index, index_at_time, index_ewma, index_ewma_windowed, index_ma, minute_values, IndexConfig,
    RateFunction,
};
use semimarkov::smc::extract_mrp;
use semimarkov::synthetic::{generate_synthetic, SyntheticGeneratorSpec};
use semimarkov::{Error, ExtractOptions, MarkovRenewalSample};

use common::{naive_ewma, naive_moving_average, random_sample};

const VALUES: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn order_two_moving_average_hand_case() {
    let s = MarkovRenewalSample::new(3, vec![1, 2, 0], vec![0, 3, 5], 6).unwrap();
    let u = index_ma(&s, &IndexConfig::moving_average(1), &[0.0, 1.0, 2.0]).unwrap();
    assert!(f64::abs(u.values[2] - 2.2) < 1e-12);
    // Weights 2/5 and 3/5 sum to one.
    assert!(f64::abs(2.0 / 5.0 * 4.0 + 3.0 / 5.0 * 1.0 - u.values[2]) < 1e-12);
    // One completed sojourn so far: truncated window.
    assert!(f64::abs(u.values[1] - 1.0) < 1e-12);
}

#[test]
fn ewma_hand_case() {
    let s = MarkovRenewalSample::new(3, vec![1, 2, 0], vec![0, 2, 3], 4).unwrap();
    let u = index_ewma(&s, &IndexConfig::ewma(0.5), &[0.0, 1.0, 2.0]).unwrap();
    assert!(f64::abs(u.values[2] - 19.0 / 7.0) < 1e-12);
    assert!(f64::abs(u.values[1] - 1.0) < 1e-12);
    // Between jumps, at t = 2 = T_1 the value equals U_1.
    let at = index_at_time(&s, &IndexConfig::ewma(0.5), &[0.0, 1.0, 2.0], 2).unwrap();
    assert_eq!(at, u.values[1]);
}

#[test]
fn explicit_and_default_initial_values() {
    let s = MarkovRenewalSample::new(3, vec![1, 2, 0], vec![0, 2, 3], 4).unwrap();
    let given = compute_index(&s, &IndexConfig::ewma(0.9).with_initial(7.0), &[0.0, 1.0, 2.0]).unwrap();
    assert_eq!(given.values[0], 7.0);
    let default = compute_index(&s, &IndexConfig::ewma(0.9), &[0.0, 1.0, 2.0]).unwrap();
    assert!(f64::abs(default.values[0] - 5.0 / 3.0) < 1e-15);
}

#[test]
fn constant_state_gives_its_square() {
    // Self-transitions allowed, so one state can repeat.
    let s = MarkovRenewalSample::new(5, vec![4; 50], (0..50).map(|k| 3 * k).collect(), 150).unwrap();
    for cfg in [IndexConfig::moving_average(3), IndexConfig::ewma(0.8), IndexConfig::ewma_windowed(0.8, 4)] {
        let u = compute_index(&s, &cfg, &VALUES).unwrap();
        assert!(u.values.iter().all(|&x| (x - 4.0).abs() < 1e-12), "{}", cfg.name());
        for t in 0..150 {
            assert!((index_at_time(&s, &cfg, &VALUES, t).unwrap() - 4.0).abs() < 1e-12);
        }
    }
}

#[test]
fn streaming_matches_double_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sample = random_sample(&mut rng, 5, 10_000, 8);
    for lambda in [1.0, 0.99, 0.9, 0.6] {
        let got = index_ewma(&sample, &IndexConfig::ewma(lambda), &VALUES).unwrap();
        let want = naive_ewma(&sample, &VALUES, lambda, usize::MAX, got.initial);
        let worst = got.values.iter().zip(&want).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        assert!(worst < 1e-10, "λ = {lambda}: {worst}");
        for m in [1, 7, 300] {
            let cfg = IndexConfig::ewma_windowed(lambda, m);
            let got = index_ewma_windowed(&sample, &cfg, &VALUES).unwrap();
            let want = naive_ewma(&sample, &VALUES, lambda, m, got.initial);
            let worst = got.values.iter().zip(&want).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
            assert!(worst < 1e-10, "λ = {lambda}, m = {m}: {worst}");
        }
    }
    for m in [1, 5, 30, 100] {
        let got = index_ma(&sample, &IndexConfig::moving_average(m), &VALUES).unwrap();
        let want = naive_moving_average(&sample, &VALUES, m, got.initial);
        let worst = got.values.iter().zip(&want).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        assert!(worst < 1e-10, "m = {m}: {worst}");
    }
}

#[test]
fn windowed_degeneracies() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let sample = random_sample(&mut rng, 5, 300, 5);
    let full = index_ewma(&sample, &IndexConfig::ewma(0.93), &VALUES).unwrap();
    let wide = index_ewma_windowed(&sample, &IndexConfig::ewma_windowed(0.93, 10_000), &VALUES).unwrap();
    for (a, b) in full.values.iter().zip(&wide.values) {
        assert!(rel(*b, *a) < 1e-12);
    }
    // λ = 1, m = 1: the last sojourn's own f value.
    let last = index_ewma_windowed(&sample, &IndexConfig::ewma_windowed(1.0, 1), &VALUES).unwrap();
    for n in 1..sample.len() {
        assert!((last.values[n] - VALUES[sample.states[n - 1]].powi(2)).abs() < 1e-12);
    }
    // λ = 1 on a window is the unweighted window average.
    let flat = index_ewma_windowed(&sample, &IndexConfig::ewma_windowed(1.0, 4), &VALUES).unwrap();
    let ma = index_ma(&sample, &IndexConfig::moving_average(3), &VALUES).unwrap();
    for n in 1..sample.len() {
        assert!((flat.values[n] - ma.values[n]).abs() < 1e-12);
    }
}

/// Direct evaluation of `U(t)` from the minute series.
fn naive_at(sample: &MarkovRenewalSample, cfg: &IndexConfig, t: u64, initial: f64) -> f64 {
    if t == sample.times[0] {
        return initial;
    }
    let n = sample.times.iter().rposition(|&x| x <= t).unwrap();
    let mut pieces = Vec::new();
    for k in 0..=n {
        let end = if k == n { t } else { sample.times[k + 1] };
        if end > sample.times[k] {
            pieces.push((VALUES[sample.states[k]].powi(2), sample.times[k], end));
        }
    }
    let (lambda, keep) = match cfg.kind {
        semimarkov::IndexKind::MovingAverage { m } => (1.0, m + 1),
        semimarkov::IndexKind::Ewma { lambda } => (lambda, usize::MAX),
        semimarkov::IndexKind::EwmaWindowed { lambda, m } => (lambda, m),
    };
    let first = pieces.len().saturating_sub(keep);
    let (mut num, mut den) = (0.0, 0.0);
    for &(f, s, e) in &pieces[first..] {
        for a in s..e {
            let w = lambda.powi((t - a) as i32);
            num += w * f;
            den += w;
        }
    }
    num / den
}

#[test]
fn minute_values_match_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let sample = random_sample(&mut rng, 5, 200, 6);
    for cfg in [IndexConfig::moving_average(2), IndexConfig::ewma(0.9), IndexConfig::ewma_windowed(0.9, 3)] {
        let series = compute_index(&sample, &cfg, &VALUES).unwrap();
        let minutes = minute_values(&sample, &cfg, &VALUES).unwrap();
        assert_eq!(minutes.len() as u64, sample.end - sample.times[0]);
        for (k, &u) in minutes.iter().enumerate() {
            let t = sample.times[0] + k as u64;
            let want = naive_at(&sample, &cfg, t, series.initial);
            assert!(rel(u, want) < 1e-10, "{} t = {t}: {u} vs {want}", cfg.name());
        }
        for (n, &t) in sample.times.iter().enumerate() {
            let at = index_at_time(&sample, &cfg, &VALUES, t).unwrap();
            assert!(rel(at, series.values[n]) < 1e-12, "{} jump {n}", cfg.name());
        }
    }
}

#[test]
fn errors() {
    let s = MarkovRenewalSample::new(3, vec![1, 2], vec![4, 6], 8).unwrap();
    let v = [0.0, 1.0, 2.0];
    assert!(matches!(index_at_time(&s, &IndexConfig::ewma(0.9), &v, 3), Err(Error::Usage(_))));
    assert!(matches!(compute_index(&s, &IndexConfig::ewma(0.0), &v), Err(Error::Config(_))));
    assert!(matches!(compute_index(&s, &IndexConfig::ewma(1.5), &v), Err(Error::Config(_))));
    assert!(matches!(compute_index(&s, &IndexConfig::moving_average(0), &v), Err(Error::Config(_))));
    assert!(matches!(index_ma(&s, &IndexConfig::ewma(0.9), &v), Err(Error::Usage(_))));
    assert!(compute_index(&s, &IndexConfig::ewma(0.9), &[0.0, 1.0]).is_err());
    assert!(IndexConfig::from_toml("kind = \"ewma\"\nlambda = 2.0\n").is_err());
}

#[test]
fn absolute_rate() {
    let s = MarkovRenewalSample::new(5, vec![0, 4, 1], vec![0, 2, 3], 4).unwrap();
    let mut cfg = IndexConfig::moving_average(5);
    cfg.rate = RateFunction::AbsoluteValue;
    let u = compute_index(&s, &cfg, &VALUES).unwrap();
    assert!((u.values[2] - 2.0).abs() < 1e-15);
}

#[test]
fn smoothing_grows_with_lambda_on_clustered_data() {
    let data = generate_synthetic::<f64>(&SyntheticGeneratorSpec::bundled(100_000, 3)).unwrap();
    let sample = extract_mrp(&data, ExtractOptions::default()).unwrap();
    let variance = |lambda: f64| {
        let u = index_ewma(&sample, &IndexConfig::ewma(lambda), &data.grid.state_values).unwrap().values;
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / u.len() as f64
    };
    let v: Vec<f64> = [0.5, 0.9, 0.95, 0.97, 0.99, 0.999].iter().map(|&l| variance(l)).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
}

proptest! {
    #[test]
    fn indices_are_bounded_weighted_averages(seed in 0u64..1000, lambda in 0.05f64..=1.0, m in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = random_sample(&mut rng, 5, 120, 7);
        let lo = 0.0;
        let hi = 4.0;
        for cfg in [IndexConfig::moving_average(m), IndexConfig::ewma(lambda), IndexConfig::ewma_windowed(lambda, m)] {
            let u = compute_index(&sample, &cfg, &VALUES).unwrap();
            for &x in &u.values {
                prop_assert!(x.is_finite() && x >= lo - 1e-12 && x <= hi + 1e-12);
            }
        }
    }
}
