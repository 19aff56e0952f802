//! Encoder -> LSTM -> (softmax policy, linear value) forward pass and its
//! reverse-mode derivative through an unrolled block.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::weights::{ActorCriticWeights, Param};
use crate::env::StateVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            cell: vec![0.0; hidden],
            hidden: vec![0.0; hidden],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cell.iter().chain(&self.hidden).all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub policy: Vec<f64>,
    pub value: f64,
    pub next: RecurrentState,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// `-sum p ln p`
pub fn entropy(policy: &[f64]) -> f64 {
    -policy
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub input: Vec<f64>,
    /// `[f_en, h_prev]`
    pub concat: Vec<f64>,
    pub forget: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub cell_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
    pub policy: Vec<f64>,
    pub value: f64,
}

fn step_cached(w: &ActorCriticWeights, input: &[f64], rs: &RecurrentState) -> Result<StepCache> {
    let dims = w.dims();
    if input.len() != dims.input {
        return Err(Error::invalid(format!(
            "state length {} does not match network input {}",
            input.len(),
            dims.input
        )));
    }
    let h = dims.hidden;
    let mut concat = vec![0.0; 2 * h];
    w.get(Param::Encoder).matvec_into(input, &mut concat[..h]);
    concat[h..].copy_from_slice(&rs.hidden);

    let gate = |p: Param, act: fn(f64) -> f64| {
        let mut v = w.get(p).matvec(&concat);
        v.iter_mut().for_each(|x| *x = act(*x));
        v
    };
    let forget = gate(Param::Forget, sigmoid);
    let input_gate = gate(Param::Input, sigmoid);
    let cell_gate = gate(Param::Cell, f64::tanh);
    let output_gate = gate(Param::Output, sigmoid);

    let cell: Vec<f64> = (0..h)
        .map(|j| rs.cell[j] * forget[j] + input_gate[j] * cell_gate[j])
        .collect();
    let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden: Vec<f64> = (0..h).map(|j| output_gate[j] * tanh_cell[j]).collect();

    let logits = w.get(Param::Policy).matvec(&hidden);
    let policy = softmax(&logits);
    let value = w.get(Param::Value).matvec(&hidden)[0];
    if !value.is_finite() || policy.iter().any(|p| !p.is_finite()) {
        return Err(Error::numerical("non-finite network output"));
    }
    Ok(StepCache {
        input: input.to_vec(),
        concat,
        forget,
        input_gate,
        cell_gate,
        output_gate,
        cell_prev: rs.cell.clone(),
        cell,
        tanh_cell,
        hidden,
        policy,
        value,
    })
}

pub fn forward_input(w: &ActorCriticWeights, input: &[f64], rs: &RecurrentState) -> Result<StepOutput> {
    let c = step_cached(w, input, rs)?;
    Ok(StepOutput {
        policy: c.policy,
        value: c.value,
        next: RecurrentState {
            cell: c.cell,
            hidden: c.hidden,
        },
    })
}

pub fn forward(w: &ActorCriticWeights, s: &StateVector, rs: &RecurrentState) -> Result<StepOutput> {
    forward_input(w, &s.to_input(), rs)
}

pub fn sample_action<R: Rng + ?Sized>(policy: &[f64], rng: &mut R) -> Result<usize> {
    let sum: f64 = policy.iter().sum();
    if policy.is_empty() || policy.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::numerical(format!("degenerate policy {policy:?}")));
    }
    let u: f64 = rng.random::<f64>() * sum;
    let mut acc = 0.0;
    for (i, p) in policy.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(policy.iter().rposition(|p| *p > 0.0).unwrap_or(0))
}

pub fn greedy_action(policy: &[f64]) -> usize {
    crate::radio::argmax(policy)
}

/// Forward pass over a block of inputs from a given recurrent state.
#[derive(Debug, Clone)]
pub struct Unroll {
    pub steps: Vec<StepCache>,
}

impl Unroll {
    pub fn final_state(&self) -> Option<RecurrentState> {
        self.steps.last().map(|s| RecurrentState {
            cell: s.cell.clone(),
            hidden: s.hidden.clone(),
        })
    }
}

pub fn unroll(w: &ActorCriticWeights, inputs: &[Vec<f64>], start: &RecurrentState) -> Result<Unroll> {
    let mut steps = Vec::with_capacity(inputs.len());
    let mut rs = start.clone();
    for x in inputs {
        let c = step_cached(w, x, &rs)?;
        rs = RecurrentState {
            cell: c.cell.clone(),
            hidden: c.hidden.clone(),
        };
        steps.push(c);
    }
    Ok(Unroll { steps })
}

/// Accumulates into `grad` the derivative of `sum_t dlogits[t] . logits_t +
/// dvalue[t] * V_t` with respect to every tensor, through the whole block.
/// The block's starting recurrent state is treated as a constant.
pub fn backward(
    w: &ActorCriticWeights,
    unroll: &Unroll,
    dlogits: &[Vec<f64>],
    dvalue: &[f64],
    grad: &mut ActorCriticWeights,
) {
    let h = w.dims().hidden;
    let steps = &unroll.steps;
    debug_assert_eq!(steps.len(), dlogits.len());
    debug_assert_eq!(steps.len(), dvalue.len());

    let mut dh_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; h];
    let mut dh = vec![0.0; h];
    let mut dconcat = vec![0.0; 2 * h];
    let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];

    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        dh.copy_from_slice(&dh_carry);
        if dlogits[t].iter().any(|v| *v != 0.0) {
            grad.get_mut(Param::Policy).add_outer(&dlogits[t], &s.hidden);
            w.get(Param::Policy).add_matvec_t(&dlogits[t], &mut dh);
        }
        if dvalue[t] != 0.0 {
            grad.get_mut(Param::Value).add_outer(&[dvalue[t]], &s.hidden);
            w.get(Param::Value).add_matvec_t(&[dvalue[t]], &mut dh);
        }

        for j in 0..h {
            let o = s.output_gate[j];
            let tc = s.tanh_cell[j];
            let d_o = dh[j] * tc;
            let dc = dc_carry[j] + dh[j] * o * (1.0 - tc * tc);
            let (f, i, g) = (s.forget[j], s.input_gate[j], s.cell_gate[j]);
            da[0][j] = dc * s.cell_prev[j] * f * (1.0 - f);
            da[1][j] = dc * g * i * (1.0 - i);
            da[2][j] = dc * i * (1.0 - g * g);
            da[3][j] = d_o * o * (1.0 - o);
            dc_carry[j] = dc * f;
        }

        dconcat.iter_mut().for_each(|v| *v = 0.0);
        for (k, p) in Param::LSTM.into_iter().enumerate() {
            grad.get_mut(p).add_outer(&da[k], &s.concat);
            w.get(p).add_matvec_t(&da[k], &mut dconcat);
        }
        grad.get_mut(Param::Encoder).add_outer(&dconcat[..h], &s.input);
        dh_carry.copy_from_slice(&dconcat[h..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::weights::NetDims;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_weights_give_uniform_policy_and_half_cell() {
        let w = ActorCriticWeights::zeros(NetDims::default());
        let rs = RecurrentState {
            cell: vec![0.8; 8],
            hidden: vec![0.3; 8],
        };
        let out = forward_input(&w, &[0.7; 12], &rs).unwrap();
        for p in &out.policy {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        assert_eq!(out.value, 0.0);
        for c in &out.next.cell {
            assert!((c - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn policy_normalized_for_random_weights() {
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let mut w = ActorCriticWeights::random(NetDims::default(), &mut rng);
            w.get_mut(Param::Policy).scale(20.0);
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let out = forward_input(&w, &x, &RecurrentState::zeros(8)).unwrap();
            let sum: f64 = out.policy.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.policy.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
    }

    #[test]
    fn wrong_input_length_rejected() {
        let w = ActorCriticWeights::zeros(NetDims::default());
        assert!(forward_input(&w, &[0.0; 5], &RecurrentState::zeros(8)).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = rng_from_seed(17);
        assert_eq!(sample_action(&[0.0, 0.0, 1.0], &mut rng).unwrap(), 2);
        let n = 100_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[sample_action(&[1.0 / 6.0; 6], &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01);
        }
        let zeros = (0..n)
            .filter(|_| sample_action(&[0.9, 0.1], &mut rng).unwrap() == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.9).abs() < 0.01);
        assert!(sample_action(&[f64::NAN, 0.5], &mut rng).is_err());
    }

    #[test]
    fn reset_state_forgets_history() {
        let mut rng = rng_from_seed(4);
        let w = ActorCriticWeights::random(NetDims::default(), &mut rng);
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rs = RecurrentState::zeros(8);
        for _ in 0..10 {
            rs = forward_input(&w, &x, &rs).unwrap().next;
        }
        assert!(!rs.is_zero());
        let a = forward_input(&w, &x, &RecurrentState::zeros(8)).unwrap();
        let b = forward_input(&w, &x, &RecurrentState::zeros(8)).unwrap();
        assert_eq!(a, b);
    }
}
