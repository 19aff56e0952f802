//! Asynchronous advantage actor-critic workers.
//!
//! A worker repeatedly fetches the cluster's weights, interacts with its own
//! environment for at most `n` slots (or until the episode ends), turns the
//! segment into truncated-BPTT gradients and pushes them to the server.
//!
//! Two schedulers drive the same worker code:
//! - [`train_threads`] runs one OS thread per worker against real time.
//! - [`train_simulated`] is a deterministic discrete-event schedule in which
//!   all UEs advance in lock-step simulated time and push when their segment
//!   ends, so staleness arises exactly as it would with parallel UEs.

pub mod tabular;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controller::{run_episodes, PolicyController, SlotTotals};
use crate::env::{EpisodeMetrics, HandoverEnv};
use crate::error::{Error, Result};
use crate::nn::{
    bptt_gradients, forward, sample_action, ActorCriticWeights, Bootstrap, RecurrentState,
    SegmentStep,
};
pub use crate::nn::TrajectorySegment;
use crate::params::{ParameterServer, PushStatus};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    /// BPTT block / rollout length in slots.
    pub n: usize,
    pub gamma: f64,
    /// Entropy bonus weight in unscaled reward units; it is multiplied by
    /// `reward_scale` together with the rewards.
    pub entropy_coeff: f64,
    /// Stop once the server has applied this many pushes.
    pub max_global_steps: u64,
    /// Global-norm clip applied before pushing; `0` disables it.
    pub grad_clip_norm: f64,
    /// Positive factor applied to rewards (and the entropy bonus) before
    /// forming targets. It leaves the regularized objective unchanged up to a
    /// constant and keeps values inside the range the bias-free value head can
    /// represent without saturating the LSTM.
    pub reward_scale: f64,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            n: 20,
            gamma: 0.99,
            entropy_coeff: 0.01,
            max_global_steps: 10_000,
            grad_clip_norm: 40.0,
            reward_scale: 0.05,
        }
    }
}

impl WorkerConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.n == 0 {
            errors.push(format!("{prefix}.n must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            errors.push(format!("{prefix}.gamma must lie in [0, 1)"));
        }
        if !(self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite()) {
            errors.push(format!("{prefix}.entropy_coeff must be >= 0"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            errors.push(format!("{prefix}.reward_scale must be > 0"));
        }
        if !(self.grad_clip_norm >= 0.0) {
            errors.push(format!("{prefix}.grad_clip_norm must be >= 0"));
        }
    }
}

/// One pushed (or dropped) segment, as streamed to the metrics sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLog {
    pub worker: usize,
    /// Server step after this push.
    pub global_step: u64,
    /// Simulated time at which the push happened.
    pub sim_time_s: f64,
    pub wall_clock_s: f64,
    pub mean_value: f64,
    pub entropy: f64,
    pub transitions: usize,
    pub staleness: u64,
    /// HO rate and throughput of the episodes that ended inside this segment.
    pub ho_rate: Option<f64>,
    pub throughput_bps: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WorkerReport {
    pub worker: usize,
    pub pushes: u64,
    pub rejected_pushes: u64,
    pub dropped_segments: u64,
    pub totals: SlotTotals,
    pub segments: Vec<SegmentLog>,
}

/// Gradient ready to push, with the statistics of the segment it came from.
#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    /// Descent direction (negated ascent gradients), clipped.
    pub grad: ActorCriticWeights,
    pub transitions: usize,
    pub terminal: bool,
    pub mean_value: f64,
    pub mean_entropy: f64,
    pub episodes: Vec<EpisodeMetrics>,
}

/// One UE learning inside a cluster.
pub struct Worker {
    pub id: usize,
    env: HandoverEnv,
    rng: SimRng,
    recurrent: RecurrentState,
    cfg: WorkerConfig,
    episode_totals: SlotTotals,
    totals: SlotTotals,
    local_slots: u64,
    dropped: u64,
}

impl Worker {
    pub fn new(id: usize, env: HandoverEnv, rng: SimRng, cfg: WorkerConfig, hidden: usize) -> Self {
        Self {
            id,
            env,
            rng,
            recurrent: RecurrentState::zeros(hidden),
            cfg,
            episode_totals: SlotTotals::default(),
            totals: SlotTotals::default(),
            local_slots: 0,
            dropped: 0,
        }
    }

    pub fn config(&self) -> &WorkerConfig {
        &self.cfg
    }

    pub fn env(&self) -> &HandoverEnv {
        &self.env
    }

    /// Slots this UE has lived through.
    pub fn local_slots(&self) -> u64 {
        self.local_slots
    }

    pub fn totals(&self) -> &SlotTotals {
        &self.totals
    }

    pub fn reset_totals(&mut self) {
        self.totals = SlotTotals::default();
    }

    pub fn dropped_segments(&self) -> u64 {
        self.dropped
    }

    pub fn recurrent(&self) -> &RecurrentState {
        &self.recurrent
    }

    /// Interacts for at most `n` slots with fixed weights. Never spans two
    /// episodes; the recurrent state is zeroed after a terminal slot.
    pub fn rollout(
        &mut self,
        w: &ActorCriticWeights,
    ) -> Result<(TrajectorySegment, Vec<EpisodeMetrics>)> {
        let start_recurrent = self.recurrent.clone();
        let mut rs = start_recurrent.clone();
        let mut steps = Vec::with_capacity(self.cfg.n);
        let mut episodes = Vec::new();
        let mut terminal = false;
        for _ in 0..self.cfg.n {
            let state = self.env.state().clone();
            let out = forward(w, &state, &rs)?;
            let action = sample_action(&out.policy, &mut self.rng)?;
            let step = self.env.step(action, &mut self.rng)?;
            self.local_slots += 1;
            self.totals.record(&step);
            self.episode_totals.record(&step);
            steps.push(SegmentStep {
                state,
                action,
                reward: step.reward * self.cfg.reward_scale,
            });
            rs = out.next;
            if step.done {
                episodes.push(EpisodeMetrics {
                    ho_rate: self.episode_totals.ho_rate(),
                    avg_throughput_bps: self.episode_totals.avg_throughput_bps(),
                    slots: self.episode_totals.slots,
                });
                self.episode_totals = SlotTotals::default();
                self.env.reset(&mut self.rng)?;
                terminal = true;
                break;
            }
        }
        self.recurrent = if terminal {
            RecurrentState::zeros(rs.hidden.len())
        } else {
            rs
        };
        let bootstrap = if terminal {
            Bootstrap::Terminal
        } else {
            Bootstrap::State(self.env.state().clone())
        };
        Ok((
            TrajectorySegment {
                steps,
                start_recurrent,
                bootstrap,
            },
            episodes,
        ))
    }

    /// Rollout plus gradient computation against one fetched snapshot.
    pub fn compute_segment(&mut self, w: &ActorCriticWeights) -> Result<SegmentOutcome> {
        let (segment, episodes) = self.rollout(w)?;
        let g = bptt_gradients(
            w,
            &segment,
            self.cfg.gamma,
            self.cfg.entropy_coeff * self.cfg.reward_scale,
        )?;
        let mut grad = g.combined();
        grad.scale(-1.0);
        if self.cfg.grad_clip_norm > 0.0 {
            grad.clip_global_norm(self.cfg.grad_clip_norm);
        }
        Ok(SegmentOutcome {
            grad,
            transitions: segment.len(),
            terminal: segment.is_terminal(),
            mean_value: g.mean_value(),
            mean_entropy: g.mean_entropy(),
            episodes,
        })
    }

    /// Like [`Worker::compute_segment`] but counts numerical faults as dropped
    /// segments instead of failing.
    fn try_segment(&mut self, w: &ActorCriticWeights) -> Result<Option<SegmentOutcome>> {
        match self.compute_segment(w) {
            Ok(o) => Ok(Some(o)),
            Err(Error::NumericalFault(msg)) => {
                log::debug!("worker {}: dropped segment: {msg}", self.id);
                self.dropped += 1;
                if self.env.is_done() {
                    self.env.reset(&mut self.rng)?;
                }
                self.recurrent = RecurrentState::zeros(self.recurrent.hidden.len());
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn slot_duration(&self) -> f64 {
        self.env.radio().slot_duration_s
    }
}

fn episode_summary(episodes: &[EpisodeMetrics]) -> (Option<f64>, Option<f64>) {
    if episodes.is_empty() {
        return (None, None);
    }
    let slots: u64 = episodes.iter().map(|e| e.slots).sum();
    let slots = slots.max(1) as f64;
    let ho = episodes.iter().map(|e| e.ho_rate * e.slots as f64).sum::<f64>() / slots;
    let thr = episodes
        .iter()
        .map(|e| e.avg_throughput_bps * e.slots as f64)
        .sum::<f64>()
        / slots;
    (Some(ho), Some(thr))
}

fn make_log(
    worker: usize,
    outcome: &SegmentOutcome,
    status: PushStatus,
    sim_time_s: f64,
    wall_clock_s: f64,
) -> Option<SegmentLog> {
    let PushStatus::Applied {
        global_step,
        staleness,
    } = status
    else {
        return None;
    };
    let (ho_rate, throughput_bps) = episode_summary(&outcome.episodes);
    Some(SegmentLog {
        worker,
        global_step,
        sim_time_s,
        wall_clock_s,
        mean_value: outcome.mean_value,
        entropy: outcome.mean_entropy,
        transitions: outcome.transitions,
        staleness,
        ho_rate,
        throughput_bps,
    })
}

/// The worker loop: fetch, roll out, compute, push, until the server has
/// applied `max_global_steps` pushes.
pub fn run_worker(worker: &mut Worker, server: &ParameterServer, clock: Instant) -> Result<WorkerReport> {
    let mut report = WorkerReport {
        worker: worker.id,
        ..WorkerReport::default()
    };
    while server.global_step() < worker.cfg.max_global_steps {
        let snap = server.fetch();
        let Some(outcome) = worker.try_segment(&snap.weights)? else {
            continue;
        };
        let status = server.push(&outcome.grad, snap.global_step, outcome.transitions as u64)?;
        match status {
            PushStatus::Applied { .. } => report.pushes += 1,
            PushStatus::Rejected => report.rejected_pushes += 1,
        }
        let sim_time = worker.local_slots as f64 * worker.slot_duration();
        if let Some(l) = make_log(worker.id, &outcome, status, sim_time, clock.elapsed().as_secs_f64()) {
            report.segments.push(l);
        }
    }
    report.dropped_segments = worker.dropped;
    report.totals = worker.totals;
    Ok(report)
}

/// One OS thread per worker.
pub fn train_threads(workers: &mut [Worker], server: &Arc<ParameterServer>) -> Result<Vec<WorkerReport>> {
    let clock = Instant::now();
    std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .iter_mut()
            .map(|w| {
                let server = Arc::clone(server);
                scope.spawn(move || run_worker(w, &server, clock))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StopRule {
    pub max_global_steps: u64,
    /// Optional limit on simulated time.
    pub max_sim_time_s: Option<f64>,
}

impl StopRule {
    pub fn steps(max_global_steps: u64) -> Self {
        Self {
            max_global_steps,
            max_sim_time_s: None,
        }
    }
}

/// Deterministic discrete-event schedule. Every worker fetches at the start
/// of its segment and pushes when the segment's last slot has elapsed;
/// pushes falling on the same slot are applied in worker order.
pub fn train_simulated(
    workers: &mut [Worker],
    server: &ParameterServer,
    stop: StopRule,
) -> Result<Vec<SegmentLog>> {
    let clock = Instant::now();
    let mut logs = Vec::new();
    if workers.is_empty() {
        return Ok(logs);
    }
    let slot_s = workers[0].slot_duration();
    let mut queue = BinaryHeap::new();
    let mut pending: Vec<Option<(SegmentOutcome, u64)>> = (0..workers.len()).map(|_| None).collect();

    let start_segment = |w: &mut Worker, pending: &mut Option<(SegmentOutcome, u64)>| -> Result<u64> {
        // A dropped segment still consumes the slots it interacted for.
        let before = w.local_slots;
        let snap = server.fetch();
        *pending = w.try_segment(&snap.weights)?.map(|o| (o, snap.global_step));
        Ok((w.local_slots - before).max(1))
    };

    let base: Vec<u64> = workers.iter().map(|w| w.local_slots).collect();
    if server.global_step() < stop.max_global_steps {
        for (i, w) in workers.iter_mut().enumerate() {
            let len = start_segment(w, &mut pending[i])?;
            queue.push(Reverse((len, i)));
        }
    }
    while let Some(Reverse((time, i))) = queue.pop() {
        let sim_time = time as f64 * slot_s;
        if stop.max_sim_time_s.is_some_and(|t| sim_time > t) {
            break;
        }
        if let Some((outcome, fetched_at)) = pending[i].take() {
            let status = server.push(&outcome.grad, fetched_at, outcome.transitions as u64)?;
            if let Some(l) = make_log(i, &outcome, status, sim_time, clock.elapsed().as_secs_f64()) {
                logs.push(l);
            }
        }
        if server.global_step() >= stop.max_global_steps {
            break;
        }
        let len = start_segment(&mut workers[i], &mut pending[i])?;
        debug_assert_eq!(workers[i].local_slots - base[i], time + len);
        queue.push(Reverse((time + len, i)));
    }
    Ok(logs)
}

/// Metrics of a frozen policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub ho_rate: f64,
    pub avg_throughput_bps: f64,
    pub mean_value: f64,
    pub slots: u64,
}

pub fn evaluate_policy(
    weights: &ActorCriticWeights,
    env: &mut HandoverEnv,
    episodes: u64,
    greedy: bool,
    max_episode_slots: u64,
    rng: &mut SimRng,
) -> Result<PolicyEvaluation> {
    if episodes == 0 {
        return Err(Error::invalid("evaluate_policy needs at least one episode"));
    }
    let mut ctl = PolicyController::new(weights.clone(), greedy);
    let totals = run_episodes(&mut ctl, env, episodes, max_episode_slots, rng)?;
    Ok(PolicyEvaluation {
        ho_rate: totals.ho_rate(),
        avg_throughput_bps: totals.avg_throughput_bps(),
        mean_value: ctl.mean_value(),
        slots: totals.slots,
    })
}
