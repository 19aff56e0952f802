//! Independent reference implementations used as test oracles. Nothing here
//! calls into the network, clustering or tabular code under test.

#![allow(dead_code)]

use std::sync::Arc;

use handover_core::env::{encode_onehot, HandoverEnv, RewardConfig, SnrNormalizer, StateVector};
use handover_core::mobility::{AreaSpec, FeatureSample, MobilityFeature};
use handover_core::nn::{ActorCriticWeights, Bootstrap, NetDims, Param, RecurrentState, SegmentStep, TrajectorySegment};
use handover_core::radio::RadioConfig;
use handover_core::topology::random_deployment;
use rand::Rng;

pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn of(w: &ActorCriticWeights, p: Param) -> Mat {
        let t = w.get(p);
        Mat {
            rows: t.rows(),
            cols: t.cols(),
            data: t.as_slice().to_vec(),
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut s = 0.0;
                for c in 0..self.cols {
                    s += self.data[r * self.cols + c] * x[c];
                }
                s
            })
            .collect()
    }
}

pub struct RefStep {
    pub policy: Vec<f64>,
    pub value: f64,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight-line LSTM actor-critic step written from the model equations.
pub fn ref_step(w: &ActorCriticWeights, x: &[f64], c_prev: &[f64], h_prev: &[f64]) -> RefStep {
    let f_en = Mat::of(w, Param::Encoder).mul(x);
    let mut z = f_en.clone();
    z.extend_from_slice(h_prev);
    let fg: Vec<f64> = Mat::of(w, Param::Forget).mul(&z).into_iter().map(sig).collect();
    let ig: Vec<f64> = Mat::of(w, Param::Input).mul(&z).into_iter().map(sig).collect();
    let cg: Vec<f64> = Mat::of(w, Param::Cell).mul(&z).into_iter().map(f64::tanh).collect();
    let og: Vec<f64> = Mat::of(w, Param::Output).mul(&z).into_iter().map(sig).collect();
    let mut cell = Vec::new();
    let mut hidden = Vec::new();
    for j in 0..fg.len() {
        let c = fg[j] * c_prev[j] + ig[j] * cg[j];
        cell.push(c);
        hidden.push(og[j] * c.tanh());
    }
    let logits = Mat::of(w, Param::Policy).mul(&hidden);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let policy = e.into_iter().map(|v| v / s).collect();
    let value = Mat::of(w, Param::Value).mul(&hidden)[0];
    RefStep {
        policy,
        value,
        cell,
        hidden,
    }
}

pub fn ref_unroll(w: &ActorCriticWeights, inputs: &[Vec<f64>], start: &RecurrentState) -> Vec<RefStep> {
    let mut c = start.cell.clone();
    let mut h = start.hidden.clone();
    let mut out = Vec::new();
    for x in inputs {
        let s = ref_step(w, x, &c, &h);
        c = s.cell.clone();
        h = s.hidden.clone();
        out.push(s);
    }
    out
}

/// Advantages of a segment under `w`, from the reference forward pass.
pub fn ref_advantages(w: &ActorCriticWeights, seg: &TrajectorySegment, gamma: f64) -> Vec<f64> {
    let inputs: Vec<Vec<f64>> = seg.steps.iter().map(|s| s.state.to_input()).collect();
    let steps = ref_unroll(w, &inputs, &seg.start_recurrent);
    let last = steps.last().unwrap();
    let mut g = match &seg.bootstrap {
        Bootstrap::Terminal => 0.0,
        Bootstrap::State(s) => ref_step(w, &s.to_input(), &last.cell, &last.hidden).value,
    };
    let mut adv = vec![0.0; steps.len()];
    for j in (0..steps.len()).rev() {
        g = seg.steps[j].reward + gamma * g;
        adv[j] = g - steps[j].value;
    }
    adv
}

/// Actor objective `sum_j A_j log pi(a_j) + c H(pi_j)` with fixed advantages.
pub fn actor_objective(w: &ActorCriticWeights, seg: &TrajectorySegment, adv: &[f64], c: f64) -> f64 {
    let inputs: Vec<Vec<f64>> = seg.steps.iter().map(|s| s.state.to_input()).collect();
    ref_unroll(w, &inputs, &seg.start_recurrent)
        .iter()
        .zip(&seg.steps)
        .zip(adv)
        .map(|((r, s), a)| {
            let h: f64 = -r.policy.iter().map(|p| p * p.ln()).sum::<f64>();
            a * r.policy[s.action].ln() + c * h
        })
        .sum()
}

/// Critic objective `sum_j A_j V(s_j)` with fixed advantages.
pub fn critic_objective(w: &ActorCriticWeights, seg: &TrajectorySegment, adv: &[f64]) -> f64 {
    let inputs: Vec<Vec<f64>> = seg.steps.iter().map(|s| s.state.to_input()).collect();
    ref_unroll(w, &inputs, &seg.start_recurrent)
        .iter()
        .zip(adv)
        .map(|(r, a)| a * r.value)
        .sum()
}

/// Central difference of `f` along every coordinate of `params`.
pub fn finite_diff(
    w: &ActorCriticWeights,
    params: &[Param],
    eps: f64,
    f: impl Fn(&ActorCriticWeights) -> f64,
) -> Vec<(Param, usize, f64)> {
    let mut out = Vec::new();
    let mut probe = w.clone();
    for &p in params {
        for k in 0..w.get(p).len() {
            let orig = w.get(p).as_slice()[k];
            probe.get_mut(p).as_mut_slice()[k] = orig + eps;
            let up = f(&probe);
            probe.get_mut(p).as_mut_slice()[k] = orig - eps;
            let down = f(&probe);
            probe.get_mut(p).as_mut_slice()[k] = orig;
            out.push((p, k, (up - down) / (2.0 * eps)));
        }
    }
    out
}

/// Five-point stencil; truncation error is O(eps^4), which keeps the oracle
/// usable on long unrolls where coordinates span many orders of magnitude.
pub fn finite_diff4(
    w: &ActorCriticWeights,
    params: &[Param],
    eps: f64,
    f: impl Fn(&ActorCriticWeights) -> f64,
) -> Vec<(Param, usize, f64)> {
    let mut out = Vec::new();
    let mut probe = w.clone();
    for &p in params {
        for k in 0..w.get(p).len() {
            let orig = w.get(p).as_slice()[k];
            let mut at = |d: f64| {
                probe.get_mut(p).as_mut_slice()[k] = orig + d;
                let v = f(&probe);
                probe.get_mut(p).as_mut_slice()[k] = orig;
                v
            };
            let d1 = at(eps) - at(-eps);
            let d2 = at(2.0 * eps) - at(-2.0 * eps);
            out.push((p, k, (8.0 * d1 - d2) / (12.0 * eps)));
        }
    }
    out
}

/// Coordinate-wise relative error with an absolute floor on the denominator.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Roundoff bound of a central difference of an objective of magnitude `f0`
/// computed in double precision with step `eps`.
pub fn central_difference_resolution(f0: f64, eps: f64) -> f64 {
    f64::EPSILON * f0.abs().max(1.0) / eps
}

pub fn random_state<R: Rng>(rng: &mut R, k: usize) -> StateVector {
    StateVector {
        rsrq: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
        prev_action_onehot: encode_onehot(rng.random_range(0..k), k).unwrap(),
        terminal: false,
    }
}

pub fn random_segment<R: Rng>(rng: &mut R, dims: NetDims, len: usize, terminal: bool) -> TrajectorySegment {
    let k = dims.actions;
    let h = dims.hidden;
    TrajectorySegment {
        steps: (0..len)
            .map(|_| SegmentStep {
                state: random_state(rng, k),
                action: rng.random_range(0..k),
                reward: rng.random_range(-3.0..3.0),
            })
            .collect(),
        start_recurrent: RecurrentState {
            cell: (0..h).map(|_| rng.random_range(-0.5..0.5)).collect(),
            hidden: (0..h).map(|_| rng.random_range(-0.5..0.5)).collect(),
        },
        bootstrap: if terminal {
            Bootstrap::Terminal
        } else {
            Bootstrap::State(random_state(rng, k))
        },
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Exact `Q^pi` from the linear Bellman system `(I - gamma P_pi) V = R_pi`.
pub fn exact_q(
    transitions: &[Vec<Vec<f64>>],
    rewards: &[Vec<f64>],
    terminal: &[bool],
    policy: &[Vec<f64>],
    gamma: f64,
) -> Vec<Vec<f64>> {
    let ns = rewards.len();
    let na = rewards[0].len();
    let mut a = vec![vec![0.0; ns]; ns];
    let mut b = vec![0.0; ns];
    for s in 0..ns {
        a[s][s] = 1.0;
        if terminal[s] {
            continue;
        }
        for act in 0..na {
            let p = policy[s][act];
            b[s] += p * rewards[s][act];
            for s2 in 0..ns {
                if !terminal[s2] {
                    a[s][s2] -= gamma * p * transitions[s][act][s2];
                }
            }
        }
    }
    let v = solve(a, b);
    (0..ns)
        .map(|s| {
            (0..na)
                .map(|act| {
                    if terminal[s] {
                        0.0
                    } else {
                        rewards[s][act]
                            + gamma * (0..ns).filter(|s2| !terminal[*s2]).map(|s2| transitions[s][act][s2] * v[s2]).sum::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

/// The fixed synthetic 4-state / 2-action MDP with one absorbing state.
pub fn synthetic_mdp() -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<bool>, Vec<Vec<f64>>) {
    let transitions = vec![
        vec![vec![0.1, 0.6, 0.3, 0.0], vec![0.5, 0.0, 0.3, 0.2]],
        vec![vec![0.0, 0.2, 0.7, 0.1], vec![0.4, 0.4, 0.0, 0.2]],
        vec![vec![0.3, 0.3, 0.2, 0.2], vec![0.0, 0.1, 0.6, 0.3]],
        vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]],
    ];
    let rewards = vec![vec![1.0, -0.5], vec![0.2, 2.0], vec![-1.0, 0.7], vec![0.0, 0.0]];
    let terminal = vec![false, false, false, true];
    let policy = vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.5, 0.5], vec![0.5, 0.5]];
    (transitions, rewards, terminal, policy)
}

/// Weighted squared distance of the clustering objective, written out.
pub fn ref_distance(a: &MobilityFeature, b: &MobilityFeature, tau: f64) -> f64 {
    let mut dp = 0.0;
    let mut dv = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        dp += (x.x - y.x).powi(2) + (x.y - y.y).powi(2);
        dv += (x.v - y.v).powi(2);
    }
    tau * dp + (1.0 - tau) * dv
}

pub fn mean_feature(points: &[&MobilityFeature]) -> MobilityFeature {
    let t = points[0].samples.len();
    let n = points.len() as f64;
    let mut samples = vec![FeatureSample { x: 0.0, y: 0.0, v: 0.0 }; t];
    for p in points {
        for (m, s) in samples.iter_mut().zip(&p.samples) {
            m.x += s.x / n;
            m.y += s.y / n;
            m.v += s.v / n;
        }
    }
    MobilityFeature { samples }
}

/// Optimal within-cluster objective over every partition into exactly `h`
/// non-empty clusters, by enumerating restricted-growth strings.
pub fn brute_force_objective(points: &[MobilityFeature], h: usize, tau: f64) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    fn rec(i: usize, used: usize, h: usize, labels: &mut [usize], points: &[MobilityFeature], tau: f64, best: &mut f64) {
        let n = labels.len();
        if n - i < h - used {
            return;
        }
        if i == n {
            if used != h {
                return;
            }
            let mut total = 0.0;
            for c in 0..h {
                let members: Vec<&MobilityFeature> = (0..n).filter(|j| labels[*j] == c).map(|j| &points[j]).collect();
                let m = mean_feature(&members);
                total += members.iter().map(|p| ref_distance(p, &m, tau)).sum::<f64>();
            }
            if total < *best {
                *best = total;
            }
            return;
        }
        for c in 0..=used.min(h - 1) {
            labels[i] = c;
            rec(i + 1, used.max(c + 1), h, labels, points, tau, best);
        }
    }
    rec(0, 0, h, &mut labels, points, tau, &mut best);
    best
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn test_area<R: Rng>(rng: &mut R) -> Arc<AreaSpec> {
    Arc::new(AreaSpec {
        id: 0,
        width_m: 16.0,
        height_m: 16.0,
        sbs_positions: random_deployment(6, 16.0, 16.0, rng),
        direction_probs: [0.25; 4],
        speed_range: (1.0, 3.0),
    })
}

pub fn test_env<R: Rng>(area: &Arc<AreaSpec>, rng: &mut R) -> HandoverEnv {
    HandoverEnv::new(
        Arc::clone(area),
        RadioConfig::default(),
        RewardConfig::default(),
        SnrNormalizer::default(),
        rng,
    )
    .unwrap()
}
