use handover_core::baselines::{a3_step, ucb_step, ucb_update, A3Params, A3State, UcbState};
use handover_core::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

/// Streak-counting restatement of the A3 rule: hand over on the slot where the
/// same strongest neighbour has beaten the serving SBS by more than the margin
/// for `ttt + 1` consecutive slots.
fn a3_reference(trace: &[Vec<f64>], hhm: f64, ttt: u32, mut serving: usize) -> Vec<usize> {
    let mut streak: Option<(usize, u32)> = None;
    let mut out = Vec::new();
    for rsrp in trace {
        let best = (0..rsrp.len()).fold(0, |b, k| if rsrp[k] > rsrp[b] { k } else { b });
        if best != serving && rsrp[best] > rsrp[serving] + hhm {
            let count = match streak {
                Some((c, n)) if c == best => n + 1,
                _ => 1,
            };
            if count > ttt {
                serving = best;
                streak = None;
            } else {
                streak = Some((best, count));
            }
        } else {
            streak = None;
        }
        out.push(serving);
    }
    out
}

fn rsrp_traces() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-90.0f64..-80.0, 3), 1..60)
}

proptest! {
    #[test]
    fn a3_matches_streak_reference(trace in rsrp_traces(), hhm in 0.0f64..5.0, ttt in 0u32..5, start in 0usize..3) {
        let mut st = A3State::new(A3Params::new(hhm, ttt));
        let mut serving = start;
        let mut got = Vec::new();
        for rsrp in &trace {
            let (a, next) = a3_step(&st, rsrp, serving).unwrap();
            prop_assert!(next.countdown <= ttt);
            st = next;
            serving = a;
            got.push(a);
        }
        prop_assert_eq!(got, a3_reference(&trace, hhm, ttt, start));
    }

    #[test]
    fn infinite_margin_never_hands_over(trace in rsrp_traces(), ttt in 0u32..5, start in 0usize..3) {
        let mut st = A3State::new(A3Params::new(f64::INFINITY, ttt));
        for rsrp in &trace {
            let (a, next) = a3_step(&st, rsrp, start).unwrap();
            prop_assert_eq!(a, start);
            st = next;
        }
    }

    #[test]
    fn negative_infinite_margin_camps_on_strongest(trace in rsrp_traces(), start in 0usize..3) {
        let mut st = A3State::new(A3Params::new(f64::NEG_INFINITY, 0));
        let mut serving = start;
        for rsrp in &trace {
            let (a, next) = a3_step(&st, rsrp, serving).unwrap();
            let best = (0..3).fold(0, |b, k| if rsrp[k] > rsrp[b] { k } else { b });
            prop_assert_eq!(a, best);
            st = next;
            serving = a;
        }
    }

    #[test]
    fn ucb_mean_is_the_sample_mean(rewards in prop::collection::vec((0usize..4, -5.0f64..5.0), 1..200)) {
        let mut st = UcbState::new(4);
        for (a, r) in &rewards {
            ucb_update(&mut st, *a, *r);
        }
        prop_assert_eq!(st.t, st.counts.iter().sum::<u64>());
        for k in 0..4 {
            let xs: Vec<f64> = rewards.iter().filter(|(a, _)| *a == k).map(|(_, r)| *r).collect();
            prop_assert_eq!(st.counts[k], xs.len() as u64);
            if !xs.is_empty() {
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                prop_assert!((st.mu[k] - mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_reward_is_exact(r in -10.0f64..10.0, m in 1usize..500) {
        let mut st = UcbState::new(2);
        for _ in 0..m {
            ucb_update(&mut st, 1, r);
        }
        prop_assert_eq!(st.mu[1], r);
    }
}

/// Fraction of plays of the best arm over the last tenth of a run.
fn bernoulli_best_arm_frequency(means: &[f64], steps: usize, seed: u64) -> f64 {
    let best = (0..means.len()).fold(0, |b, k| if means[k] > means[b] { k } else { b });
    let mut rng = rng_from_seed(seed);
    let mut st = UcbState::new(means.len());
    let tail = steps / 10;
    let mut hits = 0;
    for t in 0..steps {
        let a = ucb_step(&st);
        let r = f64::from(u8::from(rng.random::<f64>() < means[a]));
        ucb_update(&mut st, a, r);
        if t >= steps - tail && a == best {
            hits += 1;
        }
    }
    hits as f64 / tail as f64
}

#[test]
fn ucb_concentrates_on_the_best_bernoulli_arm() {
    let means = [0.2, 0.35, 0.5, 0.65, 0.8, 0.45];
    for seed in 0..3 {
        let f = bernoulli_best_arm_frequency(&means, 100_000, seed);
        assert!(f > 0.9, "seed {seed}: {f}");
    }
}
