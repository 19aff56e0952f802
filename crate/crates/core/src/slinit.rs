//! Supervised initialization: clone the A3 rule into the actor layers from a
//! handful of labeled episodes, leaving the value head as initialized.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{a3_step, A3Params, A3State};
use crate::env::{HandoverEnv, StateVector};
use crate::error::{Error, Result};
use crate::nn::{backward, unroll, ActorCriticWeights, Partition, RecurrentState};

/// One slot of an A3-labeled episode. The raw RSRPs and serving index are
/// kept so labels can be replayed through the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStep {
    pub state: StateVector,
    pub rsrp_dbm: Vec<f64>,
    pub serving: usize,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEpisode {
    pub params: A3Params,
    pub steps: Vec<LabeledStep>,
}

impl LabeledEpisode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Rolls one A3-controlled episode, capped at `max_slots`.
pub fn run_a3_episode<R: Rng + ?Sized>(
    env: &mut HandoverEnv,
    params: A3Params,
    max_slots: usize,
    rng: &mut R,
) -> Result<LabeledEpisode> {
    env.reset(rng)?;
    let mut st = A3State::new(params);
    let mut steps = Vec::new();
    while steps.len() < max_slots {
        let rsrp = env.measurement().rsrp_dbm.clone();
        let serving = env.serving();
        let (action, next) = a3_step(&st, &rsrp, serving)?;
        st = next;
        steps.push(LabeledStep {
            state: env.state().clone(),
            rsrp_dbm: rsrp,
            serving,
            action,
        });
        if env.step(action, rng)?.done {
            break;
        }
    }
    Ok(LabeledEpisode { params, steps })
}

/// Attempts per pair before settling for the longest episode seen.
pub const MAX_RESAMPLES: usize = 200;

/// One episode per `(HHM, TTT)` pair. Episodes shorter than `min_slots` are
/// resampled from a fresh spawn; in areas where UEs rarely stay that long the
/// longest of [`MAX_RESAMPLES`] attempts is kept.
pub fn generate_dataset<R: Rng + ?Sized>(
    env: &mut HandoverEnv,
    pairs: &[A3Params],
    min_slots: usize,
    max_slots: usize,
    rng: &mut R,
) -> Result<Vec<LabeledEpisode>> {
    if pairs.is_empty() {
        return Err(Error::invalid("at least one (HHM, TTT) pair is required"));
    }
    for (i, p) in pairs.iter().enumerate() {
        if pairs[..i].contains(p) {
            return Err(Error::invalid(format!("duplicate A3 pair {p:?}")));
        }
    }
    let min_slots = min_slots.max(1);
    if max_slots < min_slots {
        return Err(Error::invalid("max_slots must be >= min_slots"));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let mut best = run_a3_episode(env, *p, max_slots, rng)?;
        for _ in 1..MAX_RESAMPLES {
            if best.len() >= min_slots {
                break;
            }
            let ep = run_a3_episode(env, *p, max_slots, rng)?;
            if ep.len() > best.len() {
                best = ep;
            }
        }
        out.push(best);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Truncated-BPTT block length.
    pub block: usize,
}

impl Default for CloneConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            block: 20,
        }
    }
}

impl CloneConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.block == 0 {
            errors.push(format!("{prefix}.block must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errors.push(format!("{prefix}.learning_rate must be > 0"));
        }
    }
}

#[derive(Debug, Clone)]
pub struct CloneOutcome {
    /// Lowest-loss weights seen (the final weights when training behaved).
    pub weights: ActorCriticWeights,
    /// Mean cross-entropy before training, then after each epoch.
    pub loss_history: Vec<f64>,
    /// Final loss above the initial loss.
    pub diverged: bool,
    /// Loss never rose from one epoch to the next.
    pub monotone: bool,
}

impl CloneOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history holds the initial loss")
    }
}

fn blocks(ep: &LabeledEpisode, block: usize) -> impl Iterator<Item = &[LabeledStep]> {
    ep.steps.chunks(block)
}

/// Mean per-slot cross-entropy of the A3 labels, each episode run from a
/// zero recurrent state.
pub fn dataset_loss(w: &ActorCriticWeights, dataset: &[LabeledEpisode]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for ep in dataset {
        let inputs: Vec<Vec<f64>> = ep.steps.iter().map(|s| s.state.to_input()).collect();
        let u = unroll(w, &inputs, &RecurrentState::zeros(w.dims().hidden))?;
        for (c, s) in u.steps.iter().zip(&ep.steps) {
            sum -= c.policy[s.action].max(f64::MIN_POSITIVE).ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    Ok(sum / n as f64)
}

/// Fraction of slots on which the greedy network action equals the label.
pub fn label_accuracy(w: &ActorCriticWeights, episode: &LabeledEpisode) -> Result<f64> {
    if episode.is_empty() {
        return Err(Error::invalid("empty episode"));
    }
    let inputs: Vec<Vec<f64>> = episode.steps.iter().map(|s| s.state.to_input()).collect();
    let u = unroll(w, &inputs, &RecurrentState::zeros(w.dims().hidden))?;
    let hits = u
        .steps
        .iter()
        .zip(&episode.steps)
        .filter(|(c, s)| crate::nn::greedy_action(&c.policy) == s.action)
        .count();
    Ok(hits as f64 / episode.len() as f64)
}

/// Plain SGD on the cross-entropy over truncated blocks, in episode order.
/// Only the actor partition (encoder, LSTM, policy head) moves.
pub fn clone_policy<R: Rng + ?Sized>(
    weights: &ActorCriticWeights,
    dataset: &[LabeledEpisode],
    cfg: &CloneConfig,
    rng: &mut R,
) -> Result<CloneOutcome> {
    if dataset.iter().all(LabeledEpisode::is_empty) {
        return Err(Error::invalid("dataset is empty"));
    }
    let mut errors = Vec::new();
    cfg.validate("clone", &mut errors);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let dims = weights.dims();
    let mut w = weights.clone();
    let initial = dataset_loss(&w, dataset)?;
    let mut history = vec![initial];
    let mut best = (initial, w.clone());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..cfg.epochs {
        // Episodes stay intact; only their order is shuffled.
        order.shuffle(rng);
        for &e in &order {
            let mut rs = RecurrentState::zeros(dims.hidden);
            for block in blocks(&dataset[e], cfg.block) {
                let inputs: Vec<Vec<f64>> = block.iter().map(|s| s.state.to_input()).collect();
                let u = unroll(&w, &inputs, &rs)?;
                let dlogits: Vec<Vec<f64>> = u
                    .steps
                    .iter()
                    .zip(block)
                    .map(|(c, s)| {
                        c.policy
                            .iter()
                            .enumerate()
                            .map(|(k, p)| f64::from(u8::from(k == s.action)) - p)
                            .collect()
                    })
                    .collect();
                let mut grad = ActorCriticWeights::zeros(dims);
                backward(&w, &u, &dlogits, &vec![0.0; block.len()], &mut grad);
                let step = cfg.learning_rate;
                for &p in Partition::Actor.params() {
                    let mut g = grad.get(p).clone();
                    g.scale(step);
                    w.get_mut(p).add_assign(&g);
                }
                rs = u.final_state().expect("non-empty block");
            }
        }
        let loss = if w.is_finite() {
            dataset_loss(&w, dataset)?
        } else {
            f64::INFINITY
        };
        history.push(loss);
        if loss < best.0 {
            best = (loss, w.clone());
        }
        if !loss.is_finite() {
            break;
        }
    }
    let diverged = !(history.last().copied().unwrap_or(f64::INFINITY) <= initial);
    if diverged {
        log::warn!("behavioral cloning diverged: loss {initial} -> {:?}", history.last());
    }
    let monotone = history.windows(2).all(|p| p[1] <= p[0]);
    Ok(CloneOutcome {
        weights: best.1,
        loss_history: history,
        diverged,
        monotone,
    })
}
