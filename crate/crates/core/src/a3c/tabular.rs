//! Sample-based n-step policy evaluation on small finite MDPs.
//!
//! Uses the same n-step target construction as the workers, so comparing its
//! fixed point with the exact action values of a known MDP checks the target
//! and bootstrap logic in isolation from function approximation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::n_step_targets;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Expected immediate reward `rewards[s][a]`.
    pub rewards: Vec<Vec<f64>>,
    /// Absorbing states with value zero.
    pub terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn states(&self) -> usize {
        self.rewards.len()
    }

    pub fn actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.states(), self.actions());
        if s == 0 || a == 0 {
            return Err(Error::invalid("empty MDP"));
        }
        if self.transitions.len() != s || self.terminal.len() != s {
            return Err(Error::invalid("inconsistent state count"));
        }
        for (row, rew) in self.transitions.iter().zip(&self.rewards) {
            if row.len() != a || rew.len() != a {
                return Err(Error::invalid("inconsistent action count"));
            }
            for p in row {
                let sum: f64 = p.iter().sum();
                if p.len() != s || (sum - 1.0).abs() > 1e-9 || p.iter().any(|v| *v < 0.0) {
                    return Err(Error::invalid("transition rows must be distributions"));
                }
            }
        }
        Ok(())
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_index(&self.transitions[s][a], rng)
    }
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub gamma: f64,
    pub n: usize,
    pub sweeps: usize,
    pub samples_per_pair: usize,
}

/// Repeatedly replaces `Q(s, a)` with the mean n-step target of rollouts that
/// start with `(s, a)`, follow `policy` and bootstrap from
/// `V(s') = sum_a pi(a|s') Q(s', a)` of the previous sweep.
pub fn evaluate_q<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &[Vec<f64>],
    opts: EvalOptions,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    mdp.validate()?;
    if policy.len() != mdp.states() || policy.iter().any(|p| p.len() != mdp.actions()) {
        return Err(Error::invalid("policy shape does not match the MDP"));
    }
    if opts.n == 0 || opts.samples_per_pair == 0 {
        return Err(Error::invalid("n and samples_per_pair must be >= 1"));
    }
    let (ns, na) = (mdp.states(), mdp.actions());
    let mut q = vec![vec![0.0; na]; ns];
    let mut rewards = Vec::with_capacity(opts.n);
    for _ in 0..opts.sweeps {
        let v: Vec<f64> = (0..ns)
            .map(|s| {
                if mdp.terminal[s] {
                    0.0
                } else {
                    policy[s].iter().zip(&q[s]).map(|(p, q)| p * q).sum()
                }
            })
            .collect();
        let mut next = vec![vec![0.0; na]; ns];
        for s in 0..ns {
            if mdp.terminal[s] {
                continue;
            }
            for a0 in 0..na {
                let mut sum = 0.0;
                for _ in 0..opts.samples_per_pair {
                    rewards.clear();
                    let (mut st, mut a) = (s, a0);
                    let mut boot = 0.0;
                    loop {
                        rewards.push(mdp.rewards[st][a]);
                        st = mdp.sample_next(st, a, rng);
                        if mdp.terminal[st] {
                            break;
                        }
                        if rewards.len() == opts.n {
                            boot = v[st];
                            break;
                        }
                        a = sample_index(&policy[st], rng);
                    }
                    sum += n_step_targets(&rewards, boot, opts.gamma)[0];
                }
                next[s][a0] = sum / opts.samples_per_pair as f64;
            }
        }
        q = next;
    }
    Ok(q)
}
