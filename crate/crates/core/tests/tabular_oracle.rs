mod common;

use std::time::Instant;

use common::*;
use handover_core::a3c::tabular::{evaluate_q, EvalOptions, TabularMdp};
use handover_core::rng::rng_from_seed;

fn mdp() -> (TabularMdp, Vec<Vec<f64>>) {
    let (transitions, rewards, terminal, policy) = synthetic_mdp();
    (
        TabularMdp {
            transitions,
            rewards,
            terminal,
        },
        policy,
    )
}

fn max_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn n_step_evaluation_converges_to_exact_q() {
    let (m, policy) = mdp();
    for n in [1, 5] {
        let exact = exact_q(&m.transitions, &m.rewards, &m.terminal, &policy, 0.9);
        let start = Instant::now();
        let opts = EvalOptions {
            gamma: 0.9,
            n,
            sweeps: if n == 1 { 40 } else { 10 },
            samples_per_pair: 150_000,
        };
        let q = evaluate_q(&m, &policy, opts, &mut rng_from_seed(n as u64)).unwrap();
        let err = max_error(&q, &exact);
        assert!(err < 1e-2, "n = {n}: max error {err}");
        assert!(start.elapsed().as_secs_f64() < 5.0);
        assert!(q[3].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn deterministic_mdp_is_exact_after_enough_sweeps() {
    // A two-state chain with deterministic transitions has no sampling noise.
    let m = TabularMdp {
        transitions: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
        rewards: vec![vec![2.0, 1.0], vec![0.0, 0.0]],
        terminal: vec![false, true],
    };
    let policy = vec![vec![0.0, 1.0], vec![0.5, 0.5]];
    let exact = exact_q(&m.transitions, &m.rewards, &m.terminal, &policy, 0.5);
    // Following action 1 forever from state 0 yields 1 / (1 - 0.5) = 2.
    assert!((exact[0][1] - 2.0).abs() < 1e-12);
    assert!((exact[0][0] - 2.0).abs() < 1e-12);
    let opts = EvalOptions {
        gamma: 0.5,
        n: 3,
        sweeps: 30,
        samples_per_pair: 1,
    };
    let q = evaluate_q(&m, &policy, opts, &mut rng_from_seed(0)).unwrap();
    assert!(max_error(&q, &exact) < 1e-9);
}

#[test]
fn malformed_inputs_are_rejected() {
    let (mut m, policy) = mdp();
    let opts = EvalOptions {
        gamma: 0.9,
        n: 2,
        sweeps: 1,
        samples_per_pair: 1,
    };
    assert!(evaluate_q(&m, &policy[..2], opts, &mut rng_from_seed(0)).is_err());
    assert!(evaluate_q(&m, &policy, EvalOptions { n: 0, ..opts }, &mut rng_from_seed(0)).is_err());
    m.transitions[0][0][0] += 0.5;
    assert!(evaluate_q(&m, &policy, opts, &mut rng_from_seed(0)).is_err());
}
