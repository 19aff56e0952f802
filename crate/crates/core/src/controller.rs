//! Common interface for the learned policy and the rule/bandit baselines, so
//! evaluation code can run any of them against the same environment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{HandoverEnv, StepOutcome};
use crate::error::Result;
use crate::nn::{forward, greedy_action, sample_action, ActorCriticWeights, RecurrentState};

pub trait HandoverController {
    /// Called after the environment starts a new episode.
    fn begin_episode(&mut self, env: &HandoverEnv);

    fn select<R: Rng + ?Sized>(&mut self, env: &HandoverEnv, rng: &mut R) -> Result<usize>;

    /// Feedback for the action just taken.
    fn observe(&mut self, _action: usize, _outcome: &StepOutcome) {}
}

/// Frozen actor-critic network acting on the environment state.
pub struct PolicyController {
    weights: ActorCriticWeights,
    recurrent: RecurrentState,
    greedy: bool,
    value_sum: f64,
    value_count: u64,
}

impl PolicyController {
    pub fn new(weights: ActorCriticWeights, greedy: bool) -> Self {
        let hidden = weights.dims().hidden;
        Self {
            weights,
            recurrent: RecurrentState::zeros(hidden),
            greedy,
            value_sum: 0.0,
            value_count: 0,
        }
    }

    pub fn mean_value(&self) -> f64 {
        if self.value_count == 0 {
            0.0
        } else {
            self.value_sum / self.value_count as f64
        }
    }
}

impl HandoverController for PolicyController {
    fn begin_episode(&mut self, _env: &HandoverEnv) {
        self.recurrent = RecurrentState::zeros(self.weights.dims().hidden);
    }

    fn select<R: Rng + ?Sized>(&mut self, env: &HandoverEnv, rng: &mut R) -> Result<usize> {
        let out = forward(&self.weights, env.state(), &self.recurrent)?;
        self.recurrent = out.next;
        self.value_sum += out.value;
        self.value_count += 1;
        if self.greedy {
            Ok(greedy_action(&out.policy))
        } else {
            sample_action(&out.policy, rng)
        }
    }
}

/// Slot-weighted totals over any number of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotTotals {
    pub slots: u64,
    pub handovers: u64,
    pub rate_sum_bps: f64,
    pub reward_sum: f64,
    pub episodes: u64,
}

impl SlotTotals {
    pub fn record(&mut self, outcome: &StepOutcome) {
        self.slots += 1;
        self.handovers += u64::from(outcome.ho_occurred);
        self.rate_sum_bps += outcome.rate_bps;
        self.reward_sum += outcome.reward;
        self.episodes += u64::from(outcome.done);
    }

    pub fn ho_rate(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.handovers as f64 / self.slots as f64
        }
    }

    pub fn avg_throughput_bps(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.rate_sum_bps / self.slots as f64
        }
    }

    pub fn merge(&mut self, other: &SlotTotals) {
        self.slots += other.slots;
        self.handovers += other.handovers;
        self.rate_sum_bps += other.rate_sum_bps;
        self.reward_sum += other.reward_sum;
        self.episodes += other.episodes;
    }
}

/// Runs `controller` for exactly `slots` slots from the current UE state,
/// respawning the UE whenever an episode ends or reaches `max_episode_slots`.
pub fn run_for_slots<C: HandoverController, R: Rng + ?Sized>(
    controller: &mut C,
    env: &mut HandoverEnv,
    slots: u64,
    max_episode_slots: u64,
    rng: &mut R,
) -> Result<SlotTotals> {
    let mut totals = SlotTotals::default();
    if env.is_done() {
        env.reset(rng)?;
    }
    controller.begin_episode(env);
    let mut in_episode = 0;
    while totals.slots < slots {
        let a = controller.select(env, rng)?;
        let out = env.step(a, rng)?;
        controller.observe(a, &out);
        totals.record(&out);
        in_episode += 1;
        if out.done || in_episode >= max_episode_slots {
            env.reset(rng)?;
            controller.begin_episode(env);
            in_episode = 0;
        }
    }
    Ok(totals)
}

/// Runs `episodes` full episodes (each capped at `max_episode_slots`).
pub fn run_episodes<C: HandoverController, R: Rng + ?Sized>(
    controller: &mut C,
    env: &mut HandoverEnv,
    episodes: u64,
    max_episode_slots: u64,
    rng: &mut R,
) -> Result<SlotTotals> {
    let mut totals = SlotTotals::default();
    for _ in 0..episodes {
        env.reset(rng)?;
        controller.begin_episode(env);
        for _ in 0..max_episode_slots {
            let a = controller.select(env, rng)?;
            let out = env.step(a, rng)?;
            controller.observe(a, &out);
            totals.record(&out);
            if out.done {
                break;
            }
        }
    }
    Ok(totals)
}
