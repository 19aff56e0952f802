//! Rule-based (A3 event with hysteresis and time-to-trigger) and bandit
//! (UCB1) handover controllers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::HandoverController;
use crate::env::{HandoverEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::radio::argmax;

/// Hysteresis margin and time-to-trigger of one A3 configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A3Params {
    pub hhm_db: f64,
    pub ttt_slots: u32,
}

impl A3Params {
    pub fn new(hhm_db: f64, ttt_slots: u32) -> Self {
        Self { hhm_db, ttt_slots }
    }
}

/// Default cloning pairs: HHM 1..=5 dB against TTT 0..=4 slots.
pub fn default_a3_pairs() -> Vec<A3Params> {
    (0..5).map(|i| A3Params::new(1.0 + i as f64, i as u32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A3State {
    pub hhm_db: f64,
    pub ttt_slots: u32,
    pub candidate: Option<usize>,
    pub countdown: u32,
}

impl A3State {
    pub fn new(params: A3Params) -> Self {
        Self {
            hhm_db: params.hhm_db,
            ttt_slots: params.ttt_slots,
            candidate: None,
            countdown: 0,
        }
    }

    pub fn params(&self) -> A3Params {
        A3Params::new(self.hhm_db, self.ttt_slots)
    }

    pub fn clear(&mut self) {
        self.candidate = None;
        self.countdown = 0;
    }
}

/// One slot of the A3 rule. The strongest non-serving SBS triggers when its
/// RSRP exceeds the serving RSRP by more than the margin; the handover fires
/// once the same candidate has kept triggering for `ttt_slots` further slots.
pub fn a3_step(st: &A3State, rsrp_dbm: &[f64], serving: usize) -> Result<(usize, A3State)> {
    if serving >= rsrp_dbm.len() {
        return Err(Error::invalid(format!(
            "serving SBS {serving} out of range 0..{}",
            rsrp_dbm.len()
        )));
    }
    let mut next = st.clone();
    let best = argmax(rsrp_dbm);
    let triggered = best != serving && rsrp_dbm[best] > rsrp_dbm[serving] + st.hhm_db;
    if !triggered {
        next.clear();
        return Ok((serving, next));
    }
    if st.candidate == Some(best) {
        next.countdown = st.countdown.saturating_sub(1);
    } else {
        next.candidate = Some(best);
        next.countdown = st.ttt_slots;
    }
    if next.countdown == 0 {
        next.clear();
        Ok((best, next))
    } else {
        Ok((serving, next))
    }
}

pub struct A3Controller {
    state: A3State,
}

impl A3Controller {
    pub fn new(params: A3Params) -> Self {
        Self {
            state: A3State::new(params),
        }
    }

    pub fn state(&self) -> &A3State {
        &self.state
    }
}

impl HandoverController for A3Controller {
    fn begin_episode(&mut self, _env: &HandoverEnv) {
        self.state.clear();
    }

    fn select<R: Rng + ?Sized>(&mut self, env: &HandoverEnv, _rng: &mut R) -> Result<usize> {
        let (a, next) = a3_step(&self.state, &env.measurement().rsrp_dbm, env.serving())?;
        self.state = next;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbState {
    pub mu: Vec<f64>,
    pub counts: Vec<u64>,
    pub t: u64,
}

impl UcbState {
    pub fn new(arms: usize) -> Self {
        Self {
            mu: vec![0.0; arms],
            counts: vec![0; arms],
            t: 0,
        }
    }

    pub fn arms(&self) -> usize {
        self.mu.len()
    }

    pub fn index(&self, k: usize) -> f64 {
        if self.counts[k] == 0 {
            return f64::INFINITY;
        }
        let t = (self.t.max(1)) as f64;
        self.mu[k] + (2.0 * t.ln() / self.counts[k] as f64).sqrt()
    }
}

/// Arm to play next: unplayed arms first, then the largest UCB index, ties to
/// the lowest arm.
pub fn ucb_step(st: &UcbState) -> usize {
    if let Some(k) = st.counts.iter().position(|m| *m == 0) {
        return k;
    }
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for k in 0..st.arms() {
        let v = st.index(k);
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

pub fn ucb_update(st: &mut UcbState, action: usize, reward: f64) {
    st.counts[action] += 1;
    st.t += 1;
    let m = st.counts[action] as f64;
    st.mu[action] += (reward - st.mu[action]) / m;
}

/// UCB over SBS indices, learning from the same per-slot reward as the agent.
/// Statistics persist across episodes.
pub struct UcbController {
    state: UcbState,
}

impl UcbController {
    pub fn new(arms: usize) -> Self {
        Self {
            state: UcbState::new(arms),
        }
    }

    pub fn state(&self) -> &UcbState {
        &self.state
    }
}

impl HandoverController for UcbController {
    fn begin_episode(&mut self, _env: &HandoverEnv) {}

    fn select<R: Rng + ?Sized>(&mut self, env: &HandoverEnv, _rng: &mut R) -> Result<usize> {
        if self.state.arms() != env.sbs_count() {
            return Err(Error::invalid("UCB arm count differs from SBS count"));
        }
        Ok(ucb_step(&self.state))
    }

    fn observe(&mut self, action: usize, outcome: &StepOutcome) {
        ucb_update(&mut self.state, action, outcome.reward);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a3(hhm: f64, ttt: u32) -> A3State {
        A3State::new(A3Params::new(hhm, ttt))
    }

    #[test]
    fn immediate_trigger_without_ttt() {
        let (a, st) = a3_step(&a3(3.0, 0), &[-55.0, -50.0], 0).unwrap();
        assert_eq!(a, 1);
        assert_eq!(st.candidate, None);
    }

    #[test]
    fn margin_not_exceeded() {
        let (a, st) = a3_step(&a3(3.0, 0), &[-55.0, -53.0], 0).unwrap();
        assert_eq!(a, 0);
        assert_eq!(st.candidate, None);
    }

    #[test]
    fn broken_condition_resets_countdown() {
        let good = [-55.0, -50.0];
        let bad = [-55.0, -54.0];
        let (a, st) = a3_step(&a3(3.0, 3), &good, 0).unwrap();
        assert_eq!((a, st.candidate, st.countdown), (0, Some(1), 3));
        let (a, st) = a3_step(&st, &good, 0).unwrap();
        assert_eq!((a, st.countdown), (0, 2));
        let (a, st) = a3_step(&st, &bad, 0).unwrap();
        assert_eq!((a, st.candidate, st.countdown), (0, None, 0));
    }

    #[test]
    fn handover_after_ttt_further_slots() {
        let good = [-55.0, -50.0];
        let mut st = a3(3.0, 2);
        let mut actions = Vec::new();
        for _ in 0..3 {
            let (a, next) = a3_step(&st, &good, 0).unwrap();
            actions.push(a);
            st = next;
            assert!(st.countdown <= st.ttt_slots);
        }
        assert_eq!(actions, [0, 0, 1]);
    }

    #[test]
    fn candidate_change_restarts() {
        let mut st = a3(1.0, 1);
        (_, st) = a3_step(&st, &[-60.0, -50.0, -55.0], 0).unwrap();
        let (a, st) = a3_step(&st, &[-60.0, -55.0, -50.0], 0).unwrap();
        assert_eq!(a, 0);
        assert_eq!((st.candidate, st.countdown), (Some(2), 1));
    }

    #[test]
    fn infinite_margins() {
        let rsrp = [-70.0, -40.0, -60.0];
        let (a, _) = a3_step(&a3(f64::INFINITY, 0), &rsrp, 0).unwrap();
        assert_eq!(a, 0);
        let (a, _) = a3_step(&a3(f64::NEG_INFINITY, 0), &rsrp, 2).unwrap();
        assert_eq!(a, 1);
        assert!(a3_step(&a3(1.0, 0), &rsrp, 3).is_err());
    }

    #[test]
    fn ucb_hand_examples() {
        assert_eq!(ucb_step(&UcbState::new(3)), 0);
        let st = UcbState {
            mu: vec![1.0, 0.0],
            counts: vec![10, 10],
            t: 20,
        };
        assert_eq!(ucb_step(&st), 0);
        assert!((st.index(0) - (1.0 + (2.0 * 20f64.ln() / 10.0).sqrt())).abs() < 1e-12);
        assert!((st.index(0) - 1.774).abs() < 1e-3);
        let st = UcbState {
            mu: vec![0.0, 0.0],
            counts: vec![1, 100],
            t: 101,
        };
        assert_eq!(ucb_step(&st), 0);
        let st = UcbState {
            mu: vec![0.5, 0.5],
            counts: vec![4, 4],
            t: 8,
        };
        assert_eq!(ucb_step(&st), 0);
    }

    #[test]
    fn ucb_warm_up_order() {
        let mut st = UcbState::new(4);
        for k in 0..4 {
            assert_eq!(ucb_step(&st), k);
            ucb_update(&mut st, k, 0.0);
        }
        assert_eq!(st.t, st.counts.iter().sum::<u64>());
    }

    #[test]
    fn ucb_update_examples() {
        let mut st = UcbState::new(1);
        ucb_update(&mut st, 0, 4.0);
        assert_eq!(st.mu[0], 4.0);
        let mut st = UcbState {
            mu: vec![2.0],
            counts: vec![1],
            t: 1,
        };
        ucb_update(&mut st, 0, 4.0);
        assert_eq!(st.mu[0], 3.0);
        ucb_update(&mut st, 0, 3.0);
        assert_eq!(st.mu[0], 3.0);
    }

    #[test]
    fn constant_reward_mean_is_exact() {
        let mut st = UcbState::new(2);
        for _ in 0..1000 {
            ucb_update(&mut st, 1, 0.7);
        }
        assert_eq!(st.mu[1], 0.7);
    }
}
