//! Per-cluster parameter server with asynchronous RMSProp.
//!
//! Each tensor lives behind its own lock as an `Arc` that is replaced on
//! every update, so a fetch copies each tensor as a unit while different
//! tensors may come from different push boundaries.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ActorCriticWeights, Checkpoint, Param, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    /// Decay factor of the squared-gradient average.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errors.push(format!("{prefix}.learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.decay) {
            errors.push(format!("{prefix}.decay must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            errors.push(format!("{prefix}.epsilon must be > 0"));
        }
    }
}

/// Element-wise `g = a g + (1 - a) d^2; x -= lr d / sqrt(g + eps)`.
pub fn rmsprop_update(weight: &mut [f64], accum: &mut [f64], grad: &[f64], cfg: &RmsPropConfig) {
    for ((x, g), d) in weight.iter_mut().zip(accum.iter_mut()).zip(grad) {
        *g = cfg.decay * *g + (1.0 - cfg.decay) * d * d;
        *x -= cfg.learning_rate * d / (*g + cfg.epsilon).sqrt();
    }
}

struct Slot {
    value: Arc<Tensor>,
    accum: Tensor,
}

/// Weights plus the global step at which they were fetched.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub weights: ActorCriticWeights,
    pub global_step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushStatus {
    /// Applied; carries the global step after this push.
    Applied { global_step: u64, staleness: u64 },
    /// Contained non-finite entries and was dropped.
    Rejected,
}

pub struct ParameterServer {
    dims: crate::nn::NetDims,
    slots: Vec<Mutex<Slot>>,
    cfg: RmsPropConfig,
    global_step: AtomicU64,
    transitions: AtomicU64,
    rejected: AtomicU64,
    staleness: Mutex<BTreeMap<u64, u64>>,
}

impl ParameterServer {
    pub fn new(init: ActorCriticWeights, cfg: RmsPropConfig) -> Self {
        let dims = init.dims();
        let slots = init
            .iter()
            .map(|(_, t)| {
                Mutex::new(Slot {
                    accum: Tensor::zeros(t.rows(), t.cols()),
                    value: Arc::new(t.clone()),
                })
            })
            .collect();
        Self {
            dims,
            slots,
            cfg,
            global_step: AtomicU64::new(0),
            transitions: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            staleness: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn config(&self) -> &RmsPropConfig {
        &self.cfg
    }

    pub fn fetch(&self) -> Snapshot {
        let global_step = self.global_step.load(Ordering::SeqCst);
        let tensors = Param::ALL
            .into_iter()
            .zip(&self.slots)
            .map(|(p, slot)| {
                let arc = Arc::clone(&slot.lock().expect("slot lock").value);
                (p, (*arc).clone())
            })
            .collect();
        let weights = ActorCriticWeights::from_tensors(self.dims, tensors)
            .expect("server tensors keep their shapes");
        Snapshot {
            weights,
            global_step,
        }
    }

    pub fn weights(&self) -> ActorCriticWeights {
        self.fetch().weights
    }

    /// Applies a descent-direction gradient. `fetched_at` is the global step
    /// of the snapshot the gradient was computed from; `transitions` counts
    /// environment steps behind the gradient.
    pub fn push(
        &self,
        grad: &ActorCriticWeights,
        fetched_at: u64,
        transitions: u64,
    ) -> Result<PushStatus> {
        if grad.dims() != self.dims {
            return Err(Error::invalid("gradient shape does not match server weights"));
        }
        if !grad.is_finite() {
            self.rejected.fetch_add(1, Ordering::SeqCst);
            return Ok(PushStatus::Rejected);
        }
        for ((_, g), slot) in grad.iter().zip(&self.slots) {
            let mut slot = slot.lock().expect("slot lock");
            let mut next = (*slot.value).clone();
            rmsprop_update(next.as_mut_slice(), slot.accum.as_mut_slice(), g.as_slice(), &self.cfg);
            slot.value = Arc::new(next);
        }
        let before = self.global_step.fetch_add(1, Ordering::SeqCst);
        self.transitions.fetch_add(transitions, Ordering::SeqCst);
        let staleness = before.saturating_sub(fetched_at);
        *self
            .staleness
            .lock()
            .expect("staleness lock")
            .entry(staleness)
            .or_default() += 1;
        Ok(PushStatus::Applied {
            global_step: before + 1,
            staleness,
        })
    }

    /// Number of applied pushes.
    pub fn global_step(&self) -> u64 {
        self.global_step.load(Ordering::SeqCst)
    }

    pub fn transitions(&self) -> u64 {
        self.transitions.load(Ordering::SeqCst)
    }

    pub fn rejected_pushes(&self) -> u64 {
        self.rejected.load(Ordering::SeqCst)
    }

    /// Count of pushes per staleness (global steps between fetch and push).
    pub fn staleness_histogram(&self) -> BTreeMap<u64, u64> {
        self.staleness.lock().expect("staleness lock").clone()
    }

    pub fn rms_accumulators(&self) -> ActorCriticWeights {
        let tensors = Param::ALL
            .into_iter()
            .zip(&self.slots)
            .map(|(p, s)| (p, s.lock().expect("slot lock").accum.clone()))
            .collect();
        ActorCriticWeights::from_tensors(self.dims, tensors).expect("accumulator shapes")
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.dims);
        c.push_weights("", &self.weights());
        c.push_weights("rms.", &self.rms_accumulators());
        c.meta.insert("global_step".into(), self.global_step().into());
        c.meta.insert("transitions".into(), self.transitions().into());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint, cfg: RmsPropConfig) -> Result<Self> {
        let server = Self::new(c.weights("")?, cfg);
        if let Ok(accum) = c.weights("rms.") {
            for ((_, a), slot) in accum.iter().zip(&server.slots) {
                slot.lock().expect("slot lock").accum = a.clone();
            }
        }
        let step = c.meta.get("global_step").and_then(|v| v.as_u64()).unwrap_or(0);
        server.global_step.store(step, Ordering::SeqCst);
        let tr = c.meta.get("transitions").and_then(|v| v.as_u64()).unwrap_or(0);
        server.transitions.store(tr, Ordering::SeqCst);
        Ok(server)
    }
}

/// Returns a warning when the worker count exceeds the square root of the
/// expected number of pushes, beyond which gradient delay is expected to cancel
/// the speed-up of adding workers.
pub fn delay_warning(workers: usize, expected_pushes: u64) -> Option<String> {
    let bound = (expected_pushes as f64).sqrt();
    (workers as f64 > bound).then(|| {
        format!(
            "{workers} workers exceed sqrt({expected_pushes}) = {bound:.1}; \
             gradient staleness may negate asynchronous speed-up"
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetDims;
    use crate::rng::rng_from_seed;

    fn filled(v: f64) -> ActorCriticWeights {
        let mut w = ActorCriticWeights::zeros(NetDims::default());
        for (_, t) in w.iter_mut() {
            t.as_mut_slice().iter_mut().for_each(|x| *x = v);
        }
        w
    }

    #[test]
    fn fetch_after_init_is_exact() {
        let w = ActorCriticWeights::random(NetDims::default(), &mut rng_from_seed(1));
        let s = ParameterServer::new(w.clone(), RmsPropConfig::default());
        assert_eq!(s.fetch().weights, w);
        assert_eq!(s.global_step(), 0);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let w = ActorCriticWeights::random(NetDims::default(), &mut rng_from_seed(2));
        let s = ParameterServer::new(w.clone(), RmsPropConfig::default());
        s.push(&filled(0.0), 0, 1).unwrap();
        assert_eq!(s.fetch().weights, w);
        assert!(s.rms_accumulators().iter().all(|(_, t)| t.is_zero()));
        assert_eq!(s.global_step(), 1);
    }

    #[test]
    fn single_update_by_hand() {
        let cfg = RmsPropConfig {
            learning_rate: 1e-3,
            decay: 0.99,
            epsilon: 1e-8,
        };
        let s = ParameterServer::new(filled(0.0), cfg);
        s.push(&filled(1.0), 0, 1).unwrap();
        let g = s.rms_accumulators();
        let w = s.weights();
        for (_, t) in g.iter() {
            assert!(t.as_slice().iter().all(|v| (v - 0.01).abs() < 1e-15));
        }
        let expected = -1e-3 / (0.01f64 + 1e-8).sqrt();
        assert!((expected + 0.01).abs() < 1e-6);
        for (_, t) in w.iter() {
            assert!(t.as_slice().iter().all(|v| (v - expected).abs() < 1e-15));
        }
    }

    #[test]
    fn accumulator_converges_to_squared_gradient() {
        let cfg = RmsPropConfig::default();
        let s = ParameterServer::new(filled(0.0), cfg);
        for i in 0..3000 {
            s.push(&filled(0.5), i, 1).unwrap();
        }
        for (_, t) in s.rms_accumulators().iter() {
            for v in t.as_slice() {
                // 0.25 * (1 - 0.99^3000)
                assert!((v - 0.25).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn non_finite_push_is_rejected() {
        let s = ParameterServer::new(filled(0.0), RmsPropConfig::default());
        let mut g = filled(0.0);
        g.get_mut(Param::Cell).as_mut_slice()[3] = f64::NAN;
        assert_eq!(s.push(&g, 0, 1).unwrap(), PushStatus::Rejected);
        assert_eq!(s.rejected_pushes(), 1);
        assert_eq!(s.global_step(), 0);
        assert_eq!(s.weights(), filled(0.0));
    }

    #[test]
    fn staleness_is_recorded() {
        let s = ParameterServer::new(filled(0.0), RmsPropConfig::default());
        s.push(&filled(0.1), 0, 20).unwrap();
        s.push(&filled(0.1), 0, 20).unwrap();
        let st = s.push(&filled(0.1), 1, 20).unwrap();
        assert_eq!(st, PushStatus::Applied { global_step: 3, staleness: 1 });
        let h = s.staleness_histogram();
        assert_eq!(h.get(&0), Some(&1));
        assert_eq!(h.get(&1), Some(&2));
        assert_eq!(s.transitions(), 60);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let s = ParameterServer::new(
            ActorCriticWeights::random(NetDims::default(), &mut rng_from_seed(3)),
            RmsPropConfig::default(),
        );
        s.push(&filled(0.3), 0, 5).unwrap();
        let c = s.checkpoint();
        let r = ParameterServer::from_checkpoint(&c, RmsPropConfig::default()).unwrap();
        assert_eq!(r.weights(), s.weights());
        assert_eq!(r.rms_accumulators(), s.rms_accumulators());
        assert_eq!(r.global_step(), 1);
    }

    #[test]
    fn delay_warning_threshold() {
        assert!(delay_warning(8, 100).is_none());
        assert!(delay_warning(11, 100).is_some());
    }
}
