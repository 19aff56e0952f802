//! Downlink link model: log-distance pathloss, log-normal shadowing and
//! Rayleigh small-scale fading, with Shannon-rate throughput per slot.
//!
//! Interference is not modeled. The per-SBS SNR therefore carries the same
//! ordering information as RSRQ would, and it is what the handover state uses.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Point;

/// Distances below this are clamped before evaluating the pathloss.
pub const MIN_DISTANCE_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub shadow_sigma_db: f64,
    pub ho_interruption_s: f64,
    pub slot_duration_s: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 30.0,
            bandwidth_hz: 10e6,
            noise_density_dbm_hz: -174.0,
            shadow_sigma_db: 8.0,
            ho_interruption_s: 0.05,
            slot_duration_s: 0.1,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            errors.push(format!("{prefix}.bandwidth_hz must be > 0"));
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            errors.push(format!("{prefix}.shadow_sigma_db must be >= 0"));
        }
        if !(self.slot_duration_s > 0.0 && self.slot_duration_s.is_finite()) {
            errors.push(format!("{prefix}.slot_duration_s must be > 0"));
        }
        if !(self.ho_interruption_s >= 0.0 && self.ho_interruption_s <= self.slot_duration_s) {
            errors.push(format!(
                "{prefix}.ho_interruption_s must lie in [0, slot_duration_s]"
            ));
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
        ] {
            if !v.is_finite() {
                errors.push(format!("{prefix}.{name} must be finite"));
            }
        }
    }

    /// Thermal noise power over the full bandwidth.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10()
    }
}

/// Per-SBS measurements seen by one UE in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMeasurement {
    pub rsrp_dbm: Vec<f64>,
    pub snr_db: Vec<f64>,
}

impl LinkMeasurement {
    pub fn len(&self) -> usize {
        self.rsrp_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rsrp_dbm.is_empty()
    }

    /// Index of the strongest SBS; ties go to the lowest index.
    pub fn strongest(&self) -> usize {
        argmax(&self.rsrp_dbm)
    }
}

/// Random part of one link in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGain {
    pub shadow_db: f64,
    /// Squared magnitude of a unit-power Rayleigh coefficient.
    pub fading_power: f64,
}

impl LinkGain {
    pub const UNITY: LinkGain = LinkGain {
        shadow_db: 0.0,
        fading_power: 1.0,
    };
}

pub fn pathloss_db(distance_m: f64) -> Result<f64> {
    if !distance_m.is_finite() || distance_m < 0.0 {
        return Err(Error::invalid(format!("distance {distance_m} m")));
    }
    Ok(36.7 * distance_m.max(MIN_DISTANCE_M).log10() + 39.4)
}

pub fn sample_link_gain<R: Rng + ?Sized>(shadow_sigma_db: f64, rng: &mut R) -> LinkGain {
    let z: f64 = StandardNormal.sample(rng);
    let fading_power: f64 = Exp1.sample(rng);
    LinkGain {
        shadow_db: shadow_sigma_db * z,
        fading_power,
    }
}

pub fn rsrp_dbm(tx_power_dbm: f64, distance_m: f64, gain: LinkGain) -> Result<f64> {
    Ok(tx_power_dbm - pathloss_db(distance_m)? - gain.shadow_db
        + 10.0 * gain.fading_power.log10())
}

pub fn measure<R: Rng + ?Sized>(
    sbs_positions: &[Point],
    ue_pos: Point,
    config: &RadioConfig,
    rng: &mut R,
) -> Result<LinkMeasurement> {
    let noise = config.noise_power_dbm();
    let mut rsrp = Vec::with_capacity(sbs_positions.len());
    let mut snr = Vec::with_capacity(sbs_positions.len());
    for sbs in sbs_positions {
        let gain = sample_link_gain(config.shadow_sigma_db, rng);
        let p = rsrp_dbm(config.tx_power_dbm, ue_pos.distance(*sbs), gain)?;
        rsrp.push(p);
        snr.push(p - noise);
    }
    Ok(LinkMeasurement {
        rsrp_dbm: rsrp,
        snr_db: snr,
    })
}

/// Achievable rate over one slot; a handover blanks `ho_interruption_s` of it.
pub fn link_rate(snr_db: f64, ho_occurred: bool, config: &RadioConfig) -> f64 {
    let time_share = if ho_occurred {
        1.0 - config.ho_interruption_s / config.slot_duration_s
    } else {
        1.0
    };
    let snr = 10f64.powf(snr_db / 10.0);
    time_share * config.bandwidth_hz * (1.0 + snr).log2()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
