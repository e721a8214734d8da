mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tropmorph::autodiff::PositiveTransform;
use tropmorph::monotone::{
    invert_monotone, linspace, monotonicity_check, pava_isotonic, run_monotone_cell, synth_dataset, Method,
    MonotoneExperiment, MonotoneMode, MonotoneNet, MonotoneTrainConfig,
};

#[test]
fn pava_matches_brute_force_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..500 {
        let n = rng.random_range(1..=8usize);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let fit = pava_isotonic(&xs, &ys, &ws).unwrap();
        let oracle = common::isotonic_brute_force(&ys, &ws);
        for (i, (a, b)) in fit.values.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() <= 1e-8, "trial {trial}, point {i}: {a} vs {b}");
        }
    }
}

#[test]
fn pava_merges_ties_and_rejects_bad_input() {
    let fit = pava_isotonic(&[0.0, 1.0, 1.0, 2.0], &[0.0, 1.0, 3.0, 5.0], &[1.0; 4]).unwrap();
    assert_eq!(fit.knots, vec![0.0, 1.0, 2.0]);
    assert_eq!(fit.values, vec![0.0, 2.0, 5.0]);
    assert_eq!(fit.weights, vec![1.0, 2.0, 1.0]);
    assert_eq!(fit.predict(-1.0), 0.0);
    assert_eq!(fit.predict(1.5), 2.0);
    assert!(pava_isotonic(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).is_err());
    assert!(pava_isotonic(&[0.0], &[0.0], &[0.0]).is_err());
    assert!(pava_isotonic(&[], &[], &[]).is_err());
}

fn random_net(seed: u64, inputs: usize, mode: MonotoneMode) -> MonotoneNet {
    MonotoneNet::new(inputs, 3, 4, PositiveTransform::Square, mode, 1.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pava_output_is_sorted(ys in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let fit = pava_isotonic(&xs, &ys, &vec![1.0; ys.len()]).unwrap();
        prop_assert!(fit.values.windows(2).all(|p| p[0] <= p[1]));
        // Pooling preserves the total.
        let d: f64 = fit.values.iter().sum::<f64>() - ys.iter().sum::<f64>();
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn soft_output_is_sandwiched_around_hard(seed in any::<u64>(), beta in 0.5f64..50.0, x in -3.0f64..3.0) {
        let hard = random_net(seed, 1, MonotoneMode::Hard);
        let mut soft = hard.clone();
        soft.set_mode(MonotoneMode::Soft { beta }).unwrap();
        let h = hard.forward(&[x]).unwrap();
        let s = soft.forward(&[x]).unwrap();
        // Inner soft max overshoots by at most ln J / β, outer soft min
        // undershoots by at most ln K / β.
        prop_assert!(s <= h + 4f64.ln() / beta + 1e-12);
        prop_assert!(s >= h - 3f64.ln() / beta - 1e-12);
    }

    #[test]
    fn random_networks_are_monotone(seed in any::<u64>(), soft in any::<bool>()) {
        let mode = if soft { MonotoneMode::Soft { beta: 5.0 } } else { MonotoneMode::Hard };
        let net = random_net(seed, 2, mode);
        let g = linspace(-2.0, 2.0, 40);
        prop_assert!(monotonicity_check(&net, &[g.clone(), g], 1e-12).unwrap().passed());
    }

    #[test]
    fn inverse_is_a_right_inverse(seed in any::<u64>(), y in -2.0f64..2.0) {
        let net = random_net(seed, 1, MonotoneMode::Hard);
        let x = invert_monotone(&net, y).unwrap();
        let fx = net.forward(&[x]).unwrap();
        prop_assert!((fx - y).abs() <= 1e-9 * (1.0 + y.abs()), "f({}) = {} != {}", x, fx, y);
        prop_assert!(net.forward(&[x - 1e-6]).unwrap() < y);
    }
}

#[test]
fn hard_update_moves_only_the_active_plane() {
    let mut net = random_net(5, 1, MonotoneMode::Hard);
    let before = net.clone();
    let x = 0.3;
    let (k, j) = net.active_plane(&[x]).unwrap();
    let cfg = MonotoneTrainConfig {
        epochs: 1,
        learning_rate: 0.01,
        active_set: false,
    };
    net.train(&[x], &[10.0], &cfg).unwrap();
    let active = k * net.planes() + j;
    for p in 0..net.groups() * net.planes() {
        let moved = net.raw_weights().row(p) != before.raw_weights().row(p) || net.biases()[p] != before.biases()[p];
        assert_eq!(moved, p == active, "plane {p} (active {active})");
    }
    assert!(net.forward(&[x]).unwrap() > before.forward(&[x]).unwrap());
}

#[test]
fn training_lowers_the_loss_and_stays_monotone() {
    let (xs, ys) = synth_dataset(0.1, 60, 3).unwrap();
    for mode in [MonotoneMode::Hard, MonotoneMode::Soft { beta: 5.0 }] {
        let mut net = MonotoneNet::new(1, 4, 4, PositiveTransform::Square, mode, 20.0, 1).unwrap();
        let trace = net
            .train(
                &xs,
                &ys,
                &MonotoneTrainConfig {
                    epochs: 300,
                    ..Default::default()
                },
            )
            .unwrap();
        assert!(
            trace.last().unwrap() < &(0.5 * trace[0]),
            "{mode:?}: {} -> {}",
            trace[0],
            trace.last().unwrap()
        );
        assert!(monotonicity_check(&net, &[linspace(-1.5, 1.5, 2000)], 1e-12)
            .unwrap()
            .passed());
    }
}

#[test]
fn active_set_scaling_also_trains() {
    let (xs, ys) = synth_dataset(0.05, 60, 4).unwrap();
    let mut net = random_net(2, 1, MonotoneMode::Hard);
    let cfg = MonotoneTrainConfig {
        epochs: 200,
        learning_rate: 0.01,
        active_set: true,
    };
    let trace = net.train(&xs, &ys, &cfg).unwrap();
    assert!(trace.last().unwrap() < &trace[0]);
}

#[test]
fn checkpoints_round_trip() {
    for (mode, transform) in [
        (MonotoneMode::Hard, PositiveTransform::Exp),
        (MonotoneMode::Soft { beta: 2.5 }, PositiveTransform::Square),
    ] {
        let net = MonotoneNet::new(3, 2, 5, transform, mode, 4.0, 8).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(MonotoneNet::from_bytes(&bytes).unwrap(), net);
        for cut in [0, 7, bytes.len() - 1] {
            assert!(MonotoneNet::from_bytes(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn experiment_cell_is_deterministic() {
    let cfg = MonotoneExperiment {
        train: MonotoneTrainConfig {
            epochs: 50,
            ..Default::default()
        },
        ..MonotoneExperiment::default()
    };
    let a = run_monotone_cell(&cfg, 0.1, 3).unwrap();
    let b = run_monotone_cell(&cfg, 0.1, 3).unwrap();
    assert_eq!(a.rows, b.rows);
    let methods: Vec<Method> = a.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::ALL.to_vec());
    assert!(a.rows.iter().all(|r| r.rmse.is_finite() && r.rmse >= 0.0));
}
