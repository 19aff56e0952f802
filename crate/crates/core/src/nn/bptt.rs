//! n-step actor-critic targets and truncated-BPTT gradients for one block.

use serde::{Deserialize, Serialize};

use super::lstm::{backward, entropy, forward_input, unroll, RecurrentState};
use super::weights::ActorCriticWeights;
use crate::env::StateVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStep {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
}

/// What follows the last step of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Bootstrap {
    /// The episode ended; the tail value is zero.
    Terminal,
    /// The episode continues from this state.
    State(StateVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub steps: Vec<SegmentStep>,
    pub start_recurrent: RecurrentState,
    pub bootstrap: Bootstrap,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.bootstrap, Bootstrap::Terminal)
    }
}

/// Discounted returns by backward recursion `G_j = r_j + gamma * G_{j+1}`,
/// seeded with `bootstrap_value`.
pub fn n_step_targets(rewards: &[f64], bootstrap_value: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap_value;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    out
}

/// Ascent directions for one segment, plus the quantities used to form them.
#[derive(Debug, Clone)]
pub struct SegmentGradients {
    /// `sum_j A_j grad log pi(a_j|s_j) + c * grad H(pi_j)`, zero on `u_vo`.
    pub theta: ActorCriticWeights,
    /// `sum_j A_j grad V(s_j)`, zero on `u_po`.
    pub critic: ActorCriticWeights,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub values: Vec<f64>,
    pub entropies: Vec<f64>,
    pub bootstrap_value: f64,
    pub end_recurrent: RecurrentState,
}

impl SegmentGradients {
    /// `grad_theta + grad_w` per tensor; shared layers receive both.
    pub fn combined(&self) -> ActorCriticWeights {
        let mut g = self.theta.clone();
        g.add_assign(&self.critic);
        g
    }

    pub fn mean_value(&self) -> f64 {
        mean(&self.values)
    }

    pub fn mean_entropy(&self) -> f64 {
        mean(&self.entropies)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn bptt_gradients(
    w: &ActorCriticWeights,
    segment: &TrajectorySegment,
    gamma: f64,
    entropy_coeff: f64,
) -> Result<SegmentGradients> {
    if segment.is_empty() {
        return Err(Error::invalid("empty trajectory segment"));
    }
    let inputs: Vec<Vec<f64>> = segment.steps.iter().map(|s| s.state.to_input()).collect();
    let forward = unroll(w, &inputs, &segment.start_recurrent)?;
    let end_recurrent = forward.final_state().expect("non-empty segment");

    let bootstrap_value = match &segment.bootstrap {
        Bootstrap::Terminal => 0.0,
        Bootstrap::State(s) => forward_input(w, &s.to_input(), &end_recurrent)?.value,
    };
    let rewards: Vec<f64> = segment.steps.iter().map(|s| s.reward).collect();
    let returns = n_step_targets(&rewards, bootstrap_value, gamma);
    let values: Vec<f64> = forward.steps.iter().map(|c| c.value).collect();
    let advantages: Vec<f64> = returns.iter().zip(&values).map(|(g, v)| g - v).collect();

    let mut entropies = Vec::with_capacity(segment.len());
    let mut dlogits = Vec::with_capacity(segment.len());
    for ((cache, step), adv) in forward.steps.iter().zip(&segment.steps).zip(&advantages) {
        let pi = &cache.policy;
        if step.action >= pi.len() {
            return Err(Error::invalid(format!("action {} out of range", step.action)));
        }
        let h = entropy(pi);
        entropies.push(h);
        // d log pi(a) / dz_k = 1{k=a} - pi_k ; dH / dz_k = -pi_k (ln pi_k + H)
        let d: Vec<f64> = pi
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let onehot = if k == step.action { 1.0 } else { 0.0 };
                let ln_p = if *p > 0.0 { p.ln() } else { 0.0 };
                adv * (onehot - p) - entropy_coeff * p * (ln_p + h)
            })
            .collect();
        dlogits.push(d);
    }

    let n = segment.len();
    let dims = w.dims();
    let mut theta = ActorCriticWeights::zeros(dims);
    backward(w, &forward, &dlogits, &vec![0.0; n], &mut theta);
    let mut critic = ActorCriticWeights::zeros(dims);
    let zero_logits = vec![vec![0.0; dims.actions]; n];
    backward(w, &forward, &zero_logits, &advantages, &mut critic);

    if !theta.is_finite() || !critic.is_finite() {
        return Err(Error::numerical("non-finite gradient"));
    }
    Ok(SegmentGradients {
        theta,
        critic,
        returns,
        advantages,
        values,
        entropies,
        bootstrap_value,
        end_recurrent,
    })
}
