//! The per-UE episodic handover MDP.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{step_walk, AreaSpec, UeMotion};
use crate::radio::{link_rate, measure, LinkMeasurement, RadioConfig};

pub fn encode_onehot(action: usize, k: usize) -> Result<Vec<f64>> {
    if action >= k {
        return Err(Error::invalid(format!("action {action} out of range 0..{k}")));
    }
    let mut v = vec![0.0; k];
    v[action] = 1.0;
    Ok(v)
}

/// Normalized per-SBS SNR followed by the one-hot previous action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub rsrq: Vec<f64>,
    pub prev_action_onehot: Vec<f64>,
    #[serde(default)]
    pub terminal: bool,
}

impl StateVector {
    pub fn len(&self) -> usize {
        self.rsrq.len() + self.prev_action_onehot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prev_action(&self) -> usize {
        self.prev_action_onehot
            .iter()
            .position(|v| *v == 1.0)
            .unwrap_or(0)
    }

    /// Input layout seen by the network: `[rsrq.., onehot..]`.
    pub fn write_input(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.rsrq);
        out.extend_from_slice(&self.prev_action_onehot);
    }

    pub fn to_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.write_input(&mut v);
        v
    }
}

/// Fixed affine map applied to SNR (dB) before it enters the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrNormalizer {
    pub mean_db: f64,
    pub std_db: f64,
}

impl Default for SnrNormalizer {
    // Calibrated with `calibrate_normalizer` on the default deployment.
    fn default() -> Self {
        Self {
            mean_db: 60.8,
            std_db: 13.9,
        }
    }
}

impl SnrNormalizer {
    pub fn apply(&self, snr_db: f64) -> f64 {
        (snr_db - self.mean_db) / self.std_db
    }

    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if !(self.std_db > 0.0 && self.std_db.is_finite()) {
            errors.push(format!("{prefix}.std_db must be > 0"));
        }
        if !self.mean_db.is_finite() {
            errors.push(format!("{prefix}.mean_db must be finite"));
        }
    }
}

/// Mean and standard deviation of per-SBS SNR over uniformly placed UEs.
pub fn calibrate_normalizer<R: Rng + ?Sized>(
    areas: &[AreaSpec],
    radio: &RadioConfig,
    samples_per_area: usize,
    rng: &mut R,
) -> Result<SnrNormalizer> {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    for area in areas {
        for _ in 0..samples_per_area {
            let pos = area.sample_position(rng);
            let m = measure(&area.sbs_positions, pos, radio, rng)?;
            for v in m.snr_db {
                n += 1;
                s += v;
                s2 += v * v;
            }
        }
    }
    if n < 2 {
        return Err(Error::invalid("calibration needs at least two samples"));
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    Ok(SnrNormalizer {
        mean_db: mean,
        std_db: var.sqrt().max(1e-9),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub beta: f64,
    pub energy_per_ho: f64,
    pub rate_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: 25.0,
            energy_per_ho: 0.3,
            rate_scale: 1e8,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            errors.push(format!("{prefix}.beta must be >= 0 (got {})", self.beta));
        }
        if !(self.energy_per_ho >= 0.0 && self.energy_per_ho.is_finite()) {
            errors.push(format!("{prefix}.energy_per_ho must be >= 0"));
        }
        if !(self.rate_scale > 0.0 && self.rate_scale.is_finite()) {
            errors.push(format!("{prefix}.rate_scale must be > 0"));
        }
    }
}

pub fn reward(rate_bps: f64, ho_occurred: bool, cfg: &RewardConfig) -> f64 {
    let r = rate_bps / cfg.rate_scale;
    if ho_occurred {
        r - cfg.beta * cfg.energy_per_ho
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVector,
    pub reward: f64,
    pub done: bool,
    pub ho_occurred: bool,
    pub rate_bps: f64,
}

/// One row of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub action: usize,
    pub ho: bool,
    pub rate: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub ho_rate: f64,
    pub avg_throughput_bps: f64,
    pub slots: u64,
}

pub fn episode_metrics(history: &[SlotRecord]) -> Result<EpisodeMetrics> {
    if history.is_empty() {
        return Err(Error::invalid("episode history is empty"));
    }
    let t = history.len() as f64;
    let hos = history.iter().filter(|r| r.ho).count() as f64;
    let sum_rate: f64 = history.iter().map(|r| r.rate).sum();
    Ok(EpisodeMetrics {
        ho_rate: hos / t,
        avg_throughput_bps: sum_rate / t,
        slots: history.len() as u64,
    })
}

/// Writes `slot,action,ho,rate,reward,done` rows.
pub fn write_trace_csv<W: Write>(writer: W, history: &[SlotRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A UE as the environment sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct UeRecord {
    pub motion: UeMotion,
    pub serving: usize,
}

pub struct HandoverEnv {
    area: Arc<AreaSpec>,
    radio: RadioConfig,
    reward_cfg: RewardConfig,
    normalizer: SnrNormalizer,
    ue: UeRecord,
    measurement: LinkMeasurement,
    state: StateVector,
    done: bool,
    slot: u64,
    history: Vec<SlotRecord>,
}

impl HandoverEnv {
    pub fn new<R: Rng + ?Sized>(
        area: Arc<AreaSpec>,
        radio: RadioConfig,
        reward_cfg: RewardConfig,
        normalizer: SnrNormalizer,
        rng: &mut R,
    ) -> Result<Self> {
        let motion = UeMotion::spawn(&area, rng);
        let k = area.sbs_count();
        let mut env = Self {
            area,
            radio,
            reward_cfg,
            normalizer,
            ue: UeRecord { motion, serving: 0 },
            measurement: LinkMeasurement {
                rsrp_dbm: vec![0.0; k],
                snr_db: vec![0.0; k],
            },
            state: StateVector {
                rsrq: vec![0.0; k],
                prev_action_onehot: vec![0.0; k],
                terminal: false,
            },
            done: false,
            slot: 0,
            history: Vec::new(),
        };
        env.reset_with(motion, rng)?;
        Ok(env)
    }

    /// Respawns the UE uniformly with a fresh speed and starts a new episode.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&StateVector> {
        let motion = UeMotion::spawn(&self.area, rng);
        self.reset_with(motion, rng)
    }

    /// Starts an episode from a given position and speed. The UE attaches to
    /// the strongest SBS.
    pub fn reset_with<R: Rng + ?Sized>(
        &mut self,
        motion: UeMotion,
        rng: &mut R,
    ) -> Result<&StateVector> {
        self.measurement = measure(&self.area.sbs_positions, motion.pos, &self.radio, rng)?;
        let serving = self.measurement.strongest();
        self.ue = UeRecord { motion, serving };
        self.state = self.build_state(serving, false)?;
        self.done = false;
        self.slot = 0;
        self.history.clear();
        Ok(&self.state)
    }

    fn build_state(&self, prev_action: usize, terminal: bool) -> Result<StateVector> {
        Ok(StateVector {
            rsrq: self
                .measurement
                .snr_db
                .iter()
                .map(|s| self.normalizer.apply(*s))
                .collect(),
            prev_action_onehot: encode_onehot(prev_action, self.area.sbs_count())?,
            terminal,
        })
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::ContractViolation(
                "step called on a terminal episode".into(),
            ));
        }
        let k = self.area.sbs_count();
        if action >= k {
            return Err(Error::invalid(format!("action {action} out of range 0..{k}")));
        }
        let ho = action != self.ue.serving;
        self.ue.serving = action;
        let rate = link_rate(self.measurement.snr_db[action], ho, &self.radio);
        let r = reward(rate, ho, &self.reward_cfg);

        let walk = step_walk(
            self.ue.motion.pos,
            self.ue.motion.speed,
            &self.area,
            self.radio.slot_duration_s,
            rng,
        );
        self.ue.motion.pos = walk.pos;
        self.done = walk.exited;
        if !self.done {
            self.measurement = measure(&self.area.sbs_positions, walk.pos, &self.radio, rng)?;
        }
        self.state = self.build_state(action, self.done)?;
        self.history.push(SlotRecord {
            slot: self.slot,
            action,
            ho,
            rate,
            reward: r,
            done: self.done,
        });
        self.slot += 1;
        Ok(StepOutcome {
            next_state: self.state.clone(),
            reward: r,
            done: self.done,
            ho_occurred: ho,
            rate_bps: rate,
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn measurement(&self) -> &LinkMeasurement {
        &self.measurement
    }

    pub fn ue(&self) -> &UeRecord {
        &self.ue
    }

    pub fn serving(&self) -> usize {
        self.ue.serving
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn sbs_count(&self) -> usize {
        self.area.sbs_count()
    }

    pub fn area(&self) -> &AreaSpec {
        &self.area
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward_cfg
    }

    /// Slots of the current episode so far.
    pub fn history(&self) -> &[SlotRecord] {
        &self.history
    }

    pub fn episode_metrics(&self) -> Result<EpisodeMetrics> {
        episode_metrics(&self.history)
    }
}
