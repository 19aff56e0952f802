//! Seeded fixtures shared by the benchmarks.

use std::sync::Arc;

use handover_core::a3c::{TrajectorySegment, Worker, WorkerConfig};
use handover_core::mobility::{collect_features, AreaSpec, MobilityFeature};
use handover_core::rng::{derived_rng, rng_from_seed};
use handover_core::topology::random_deployment;
use handover_core::{ActorCriticWeights, HandoverEnv, NetDims, RadioConfig, RewardConfig, SnrNormalizer};

pub fn area(seed: u64) -> Arc<AreaSpec> {
    let mut rng = rng_from_seed(seed);
    Arc::new(AreaSpec {
        id: 0,
        width_m: 16.0,
        height_m: 16.0,
        sbs_positions: random_deployment(6, 16.0, 16.0, &mut rng),
        direction_probs: [0.25; 4],
        speed_range: (1.0, 3.0),
    })
}

pub fn env(seed: u64) -> HandoverEnv {
    HandoverEnv::new(
        area(seed),
        RadioConfig::default(),
        RewardConfig::default(),
        SnrNormalizer::default(),
        &mut derived_rng(seed, 1),
    )
    .expect("fixture environment")
}

pub fn weights(seed: u64) -> ActorCriticWeights {
    ActorCriticWeights::random(NetDims::default(), &mut derived_rng(seed, 2))
}

pub fn worker(seed: u64) -> Worker {
    Worker::new(0, env(seed), derived_rng(seed, 3), WorkerConfig::default(), NetDims::default().hidden)
}

/// First full-length rollout of a fresh worker.
pub fn segment(seed: u64) -> TrajectorySegment {
    let w = weights(seed);
    let mut wk = worker(seed);
    loop {
        let (seg, _) = wk.rollout(&w).expect("fixture rollout");
        if seg.len() == wk.config().n {
            return seg;
        }
    }
}

pub fn features(ues: usize, t_u: usize, seed: u64) -> Vec<MobilityFeature> {
    collect_features(&area(seed), ues, t_u, 0.1, &mut derived_rng(seed, 4))
}
