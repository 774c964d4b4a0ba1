mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semimarkov::discretization::fit_index_grid;
use semimarkov::index::{compute_index, IndexConfig};
use semimarkov::indexed_kernel::estimate_indexed_kernel;
use semimarkov::simulate::{
    expand_to_minutes, simulate_indexed, simulate_indexed_replication, simulate_indexed_replications,
    simulate_smc, simulate_smc_replication, simulate_smc_replications, GENERATOR_ID,
};
use semimarkov::smc::extract_mrp;
use semimarkov::synthetic::five_state_grid;
use semimarkov::{
    Error, ExtractOptions, IndexGrid, IndexedEstimateOptions, MarkovRenewalSample, SemiMarkovKernel,
    SimulationConfig, Warmup,
};

use common::{ks_distance, random_kernel, reference_kernel, sojourn_cdf};

#[test]
fn first_jumps_follow_the_embedded_row() {
    let k = reference_kernel();
    let reps = 100_000;
    for i in 0..3 {
        let mut cfg = SimulationConfig::new(10, 42, i);
        cfg.replications = reps;
        let trajs = simulate_smc_replications(&k, &cfg).unwrap();
        let mut counts = [0usize; 3];
        for t in &trajs {
            assert!(t.states.len() >= 2);
            counts[t.states[1]] += 1;
        }
        for j in 0..3 {
            let p = k.p(i, j).unwrap();
            let sd = (reps as f64 * p * (1.0 - p)).sqrt();
            let dev = (counts[j] as f64 - reps as f64 * p).abs();
            assert!(dev <= 4.0 * sd.max(1e-12), "row {i}: {counts:?}");
        }
    }
}

#[test]
fn sojourns_follow_their_conditional_laws() {
    let k = reference_kernel();
    let traj = simulate_smc(&k, &SimulationConfig::new(2_000_000, 42, 0)).unwrap();
    let mut draws = vec![vec![Vec::new(); 3]; 3];
    for n in 0..traj.states.len() - 1 {
        let w = (traj.times[n + 1] - traj.times[n]) as usize;
        draws[traj.states[n]][traj.states[n + 1]].push(w);
    }
    for i in 0..3 {
        for j in 0..3 {
            if k.p(i, j).unwrap() == 0.0 {
                assert!(draws[i][j].is_empty());
                continue;
            }
            let d = &draws[i][j];
            assert!(d.len() >= 10_000, "pair ({i}, {j}): {}", d.len());
            let d = &d[..10_000];
            let want = sojourn_cdf(&k, i, j);
            let got: Vec<f64> = (0..want.len())
                .map(|t| d.iter().filter(|&&w| w <= t).count() as f64 / d.len() as f64)
                .collect();
            let ks = ks_distance(&got, &want);
            assert!(ks < 0.02, "pair ({i}, {j}): KS {ks}");
        }
    }
}

#[test]
fn trajectories_are_well_formed_and_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = random_kernel(&mut rng, 4, 6);
    let mut cfg = SimulationConfig::new(10_000, 42, 2);
    cfg.replications = 6;
    let all = simulate_smc_replications(&k, &cfg).unwrap();
    for (r, t) in all.iter().enumerate() {
        assert_eq!(t.replication, r as u64);
        assert_eq!(t.seed, 42);
        assert_eq!(t.kernel_fingerprint, k.fingerprint());
        assert_eq!((t.states[0], t.times[0]), (2, 0));
        assert!(t.times.windows(2).all(|w| w[0] < w[1]));
        assert!(*t.times.last().unwrap() < t.horizon);
        assert!(t.states.iter().all(|&s| s < 4));
        assert_eq!(t, &simulate_smc_replication(&k, &cfg, r as u64).unwrap());
    }
    let mut fewer = cfg.clone();
    fewer.replications = 3;
    assert_eq!(simulate_smc_replications(&k, &fewer).unwrap()[..], all[..3]);
    assert!(!GENERATOR_ID.is_empty());
}

#[test]
fn expansion_round_trips_through_extraction() {
    let k = reference_kernel();
    let grid = five_state_grid::<f64>(0.01).unwrap();
    let traj = simulate_smc(&k, &SimulationConfig::new(50_000, 1, 0)).unwrap();
    let series = expand_to_minutes(&traj, &grid).unwrap();
    assert_eq!(series.len(), 50_000);
    let back = extract_mrp(&series, ExtractOptions::default()).unwrap();
    assert_eq!(back.states, traj.states);
    assert_eq!(back.times, traj.times);

    let single = semimarkov::Trajectory::<f64> {
        states: vec![3],
        times: vec![0],
        horizon: 7,
        seed: 0,
        replication: 0,
        kernel_fingerprint: String::new(),
        index_values: None,
    };
    assert_eq!(expand_to_minutes(&single, &grid).unwrap().states, vec![3; 7]);
}

#[test]
fn invalid_configurations() {
    let k = reference_kernel();
    assert!(matches!(simulate_smc(&k, &SimulationConfig::new(0, 1, 0)), Err(Error::Config(_))));
    assert!(matches!(simulate_smc(&k, &SimulationConfig::new(10, 1, 3)), Err(Error::Config(_))));
    let mut cfg = SimulationConfig::new(10, 1, 0);
    cfg.replications = 0;
    assert!(matches!(simulate_smc_replications(&k, &cfg), Err(Error::Config(_))));

    let sample = MarkovRenewalSample::new(3, vec![0, 1, 0, 1, 2], vec![0, 1, 3, 4, 6], 8).unwrap();
    let index = compute_index(&sample, &IndexConfig::ewma(0.9), &[-1.0, 0.0, 1.0]).unwrap();
    let opts = IndexedEstimateOptions {
        backoff_threshold: 1,
        fallback_rows: true,
        ..Default::default()
    };
    let ik = estimate_indexed_kernel(&sample, &index, &IndexGrid::single(), opts).unwrap();
    let mut cfg = SimulationConfig::new(10, 1, 0);
    cfg.warmup = Warmup::History(vec![(5, 3)]);
    assert!(matches!(
        simulate_indexed(&ik, &IndexConfig::ewma(0.9), &[-1.0, 0.0, 1.0], &cfg),
        Err(Error::Config(_))
    ));
    cfg.warmup = Warmup::History(vec![(1, 0)]);
    assert!(simulate_indexed(&ik, &IndexConfig::ewma(0.9), &[-1.0, 0.0, 1.0], &cfg).is_err());
    cfg.warmup = Warmup::BurnIn(0);
    assert!(matches!(
        simulate_indexed(&ik, &IndexConfig::ewma(0.9), &[-1.0, 0.0], &cfg),
        Err(Error::Usage(_))
    ));
}

#[test]
fn unobserved_row_reached_midway() {
    // State 2 is entered but never left.
    let sample = MarkovRenewalSample::new(3, vec![0, 1, 0, 2], vec![0, 2, 3, 5], 9).unwrap();
    let k: SemiMarkovKernel<f64> = semimarkov::smc::estimate_kernel(&sample, None, false).unwrap();
    let err = simulate_smc(&k, &SimulationConfig::new(1_000, 4, 0)).unwrap_err();
    assert!(matches!(err, Error::UnobservedRow { state: 2 }), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn indexed_replications_and_single_level_degeneracy() {
    let k = reference_kernel();
    let traj = simulate_smc(&k, &SimulationConfig::new(100_000, 8, 0)).unwrap();
    let sample = MarkovRenewalSample::new(3, traj.states, traj.times, 100_000).unwrap();
    let values = [-1.0, 0.0, 1.0];
    let icfg = IndexConfig::moving_average(5);
    let index = compute_index(&sample, &icfg, &values).unwrap();

    let single = estimate_indexed_kernel(&sample, &index, &IndexGrid::single(), IndexedEstimateOptions::default()).unwrap();
    let mut cfg = SimulationConfig::new(30_000, 42, 1);
    cfg.warmup = Warmup::BurnIn(0);
    let a = simulate_indexed(&single, &icfg, &values, &cfg).unwrap();
    let b = simulate_smc(single.unconditional(), &cfg).unwrap();
    assert_eq!((a.states, a.times), (b.states, b.times));

    let grid = fit_index_grid(&index.values, 3).unwrap();
    let ik = estimate_indexed_kernel(&sample, &index, &grid, IndexedEstimateOptions::default()).unwrap();
    let mut cfg = SimulationConfig::new(5_000, 42, 0);
    cfg.replications = 4;
    let all = simulate_indexed_replications(&ik, &icfg, &values, &cfg).unwrap();
    for (r, t) in all.iter().enumerate() {
        assert_eq!(t, &simulate_indexed_replication(&ik, &icfg, &values, &cfg, r as u64).unwrap());
        let u = t.index_values.as_ref().unwrap();
        assert_eq!(u.len(), t.states.len());
        assert!(u.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(t.minute_states().len(), 5_000);
    }
    assert_ne!(all[0].states, all[1].states);
}
