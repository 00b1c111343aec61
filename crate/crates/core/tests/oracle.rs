mod common;

use common::{exact_logs, max_engine_deviation};
use fibrelay::{CoefficientModel, GainPolicy};

#[test]
fn engine_matches_exact_recursion() {
    for seed in 0..20u64 {
        let dev = max_engine_deviation(seed, seed % 3, 40);
        assert!(dev < 1e-9, "seed {seed}: {dev:e}");
    }
}

#[test]
fn exact_replay_reproduces_fibonacci() {
    let logs = exact_logs(
        CoefficientModel::Deterministic { c: 1.0 },
        &GainPolicy::Constant(1.0),
        1.0,
        1.0,
        10,
        0,
        0,
    );
    let fib = [1.0f64, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 55.0, 89.0];
    for (k, (&(log_i, _), f)) in logs.iter().zip(fib).enumerate() {
        assert!((log_i - f.ln()).abs() < 1e-15, "node {}", k + 1);
    }
    assert_eq!(logs[0].1, 0.0);
}

#[test]
fn per_node_gains_follow_the_same_draws() {
    let gains = GainPolicy::PerNode((1..=30).map(|k| 0.5 + 0.05 * k as f64).collect());
    let model = CoefficientModel::Uniform { a: 0.2, b: 1.8 };
    let config = fibrelay::NetworkConfig {
        model,
        gains: gains.clone(),
        n0: 0.25,
        i0: 2.0,
        n_nodes: 30,
        master_seed: 99,
    };
    let t = fibrelay::run_trajectory(&config, 4).unwrap();
    let oracle = exact_logs(model, &gains, 0.25, 2.0, 30, 99, 4);
    for (k, &(log_i, log_n_sq)) in oracle.iter().enumerate() {
        assert!((0.5 * t.log_i_sq[k] - log_i).abs() < 1e-12);
        assert!((t.log_n_sq[k] - log_n_sq).abs() < 1e-12);
    }
}
