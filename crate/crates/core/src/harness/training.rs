//! Cluster formation, network initialization, training and new-UE testing,
//! shared by the CLI verbs and the experiments.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ClusterAssignment, ExperimentConfig, Scheduler};
use crate::a3c::{train_simulated, train_threads, SegmentLog, StopRule, Worker};
use crate::baselines::{A3Controller, A3Params, UcbController};
use crate::clustering::{select_h, Selection};
use crate::controller::{run_for_slots, PolicyController, SlotTotals};
use crate::env::{HandoverEnv, RewardConfig};
use crate::error::{Error, Result};
use crate::mobility::{collect_features, AreaSpec, MobilityFeature};
use crate::nn::ActorCriticWeights;
use crate::params::{delay_warning, ParameterServer};
use crate::rng::{derive_seed, derived_rng, SimRng};
use crate::slinit::{clone_policy, generate_dataset, CloneOutcome};
use crate::topology::NetworkTopology;

// Stream identifiers for `derive_seed`, one per independent consumer.
const STREAM_FEATURES: u64 = 1;
const STREAM_KMEANS: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_SL: u64 = 4;
const STREAM_WORKER: u64 = 1_000;
const STREAM_NEW_UE: u64 = 5;

pub fn reward_with_beta(cfg: &ExperimentConfig, beta: f64) -> RewardConfig {
    RewardConfig {
        beta,
        ..cfg.reward
    }
}

pub fn make_env(cfg: &ExperimentConfig, area: &Arc<AreaSpec>, beta: f64, rng: &mut SimRng) -> Result<HandoverEnv> {
    HandoverEnv::new(
        Arc::clone(area),
        cfg.radio,
        reward_with_beta(cfg, beta),
        cfg.normalizer,
        rng,
    )
}

/// Observation features of every UE, tagged with its area.
pub fn mobility_dataset(
    cfg: &ExperimentConfig,
    topo: &NetworkTopology,
    ues_per_area: usize,
    seed: u64,
) -> (Vec<MobilityFeature>, Vec<usize>) {
    let mut rng = derived_rng(seed, STREAM_FEATURES);
    let mut features = Vec::new();
    let mut areas = Vec::new();
    for area in &topo.areas {
        for f in collect_features(area, ues_per_area, cfg.clustering.t_u, cfg.radio.slot_duration_s, &mut rng) {
            features.push(f);
            areas.push(area.id);
        }
    }
    (features, areas)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterPlan {
    /// Area ids of every learning cluster.
    pub groups: Vec<Vec<usize>>,
    pub selection: Option<Selection>,
    /// Area of each clustered UE.
    pub ue_areas: Vec<usize>,
}

impl ClusterPlan {
    pub fn group_of(&self, area: usize) -> Option<&[usize]> {
        self.groups.iter().find(|g| g.contains(&area)).map(Vec::as_slice)
    }
}

/// Runs the centralized controller and maps its UE clusters to areas by
/// majority vote.
pub fn plan_clusters(cfg: &ExperimentConfig, topo: &NetworkTopology, seed: u64) -> Result<ClusterPlan> {
    let n_areas = topo.areas.len();
    if cfg.clustering.assignment == ClusterAssignment::MobilityProfile {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for a in &topo.areas {
            let same = |g: &Vec<usize>| {
                let b = &topo.areas[g[0]];
                b.direction_probs == a.direction_probs && b.speed_range == a.speed_range
            };
            match groups.iter_mut().find(|g| same(g)) {
                Some(g) => g.push(a.id),
                None => groups.push(vec![a.id]),
            }
        }
        return Ok(ClusterPlan {
            groups,
            selection: None,
            ue_areas: Vec::new(),
        });
    }
    if n_areas == 1 {
        return Ok(ClusterPlan {
            groups: vec![vec![0]],
            selection: None,
            ue_areas: Vec::new(),
        });
    }
    let (features, ue_areas) = mobility_dataset(cfg, topo, cfg.clustering.ues_per_area, seed);
    let mut rng = derived_rng(seed, STREAM_KMEANS);
    let sel = select_h(
        &features,
        cfg.h_max(),
        cfg.clustering.tau,
        cfg.clustering.kmeans_options(),
        &mut rng,
    )?;
    let mut votes = vec![vec![0usize; sel.model.h_count]; n_areas];
    for (ue, h) in sel.model.assignments.iter().enumerate() {
        votes[ue_areas[ue]][*h] += 1;
    }
    let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (area, v) in votes.iter().enumerate() {
        let h = crate::radio::argmax(&v.iter().map(|c| *c as f64).collect::<Vec<_>>());
        by_cluster.entry(h).or_default().push(area);
    }
    Ok(ClusterPlan {
        groups: by_cluster.into_values().collect(),
        selection: Some(sel),
        ue_areas,
    })
}

/// Areas that train together with area 0: its cluster, or area 0 alone
/// when clustering is off.
pub fn training_areas(cfg: &ExperimentConfig, topo: &NetworkTopology, clustering: bool, seed: u64) -> Result<Vec<usize>> {
    if !clustering {
        return Ok(vec![0]);
    }
    let plan = plan_clusters(cfg, topo, seed)?;
    Ok(plan.group_of(0).map(<[usize]>::to_vec).unwrap_or_else(|| vec![0]))
}

pub fn random_weights(cfg: &ExperimentConfig, seed: u64) -> ActorCriticWeights {
    ActorCriticWeights::random(cfg.net_dims(), &mut derived_rng(seed, STREAM_INIT))
}

/// Clones the A3 rule on episodes from `area`, starting from `init`.
pub fn sl_initialize(
    cfg: &ExperimentConfig,
    area: &Arc<AreaSpec>,
    init: &ActorCriticWeights,
    seed: u64,
) -> Result<CloneOutcome> {
    let mut rng = derived_rng(seed, STREAM_SL);
    let mut env = make_env(cfg, area, cfg.reward.beta, &mut rng)?;
    let s = &cfg.slinit;
    let data = generate_dataset(&mut env, &s.pairs, s.min_episode_slots, s.max_episode_slots, &mut rng)?;
    clone_policy(init, &data, &s.clone_config(), &mut rng)
}

/// Random weights, cloned from A3 when `sl_init` is on.
pub fn initial_weights(cfg: &ExperimentConfig, area: &Arc<AreaSpec>, sl_init: bool, seed: u64) -> Result<ActorCriticWeights> {
    let w = random_weights(cfg, seed);
    if sl_init {
        Ok(sl_initialize(cfg, area, &w, seed)?.weights)
    } else {
        Ok(w)
    }
}

/// One point of a learning curve: averages over the segments pushed inside
/// one window of global steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub global_step: u64,
    pub sim_time_s: f64,
    pub wall_clock_s: f64,
    pub mean_value: f64,
    pub entropy: f64,
    pub ho_rate: Option<f64>,
    pub throughput_bps: Option<f64>,
}

/// Buckets `logs` of the selected workers into `points` equal windows of
/// the global step.
pub fn learning_curve(logs: &[SegmentLog], workers: &[usize], max_step: u64, points: usize) -> Vec<CurvePoint> {
    let points = points.max(1);
    let width = max_step.div_ceil(points as u64).max(1);
    let mut buckets: Vec<Vec<&SegmentLog>> = vec![Vec::new(); points];
    for l in logs.iter().filter(|l| workers.contains(&l.worker)) {
        let b = ((l.global_step.saturating_sub(1)) / width) as usize;
        buckets[b.min(points - 1)].push(l);
    }
    buckets
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(|b| {
            let n = b.len() as f64;
            let last = b.iter().max_by_key(|l| l.global_step).expect("non-empty");
            let weighted = |f: fn(&SegmentLog) -> Option<f64>| {
                let v: Vec<f64> = b.iter().filter_map(|l| f(l)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            CurvePoint {
                global_step: last.global_step,
                sim_time_s: last.sim_time_s,
                wall_clock_s: last.wall_clock_s,
                mean_value: b.iter().map(|l| l.mean_value).sum::<f64>() / n,
                entropy: b.iter().map(|l| l.entropy).sum::<f64>() / n,
                ho_rate: weighted(|l| l.ho_rate),
                throughput_bps: weighted(|l| l.throughput_bps),
            }
        })
        .collect()
}

#[derive(Clone)]
pub struct TrainOutcome {
    pub weights: ActorCriticWeights,
    pub server: Arc<ParameterServer>,
    pub logs: Vec<SegmentLog>,
    /// Worker ids belonging to each training area, in `areas` order.
    pub area_workers: Vec<Vec<usize>>,
    pub totals: SlotTotals,
    pub dropped_segments: u64,
}

impl TrainOutcome {
    pub fn global_step(&self) -> u64 {
        self.server.global_step()
    }
}

/// Trains one cluster made of `areas` (indices into `topo`) with
/// `ues_per_area` learning UEs each, all sharing one parameter server.
pub fn train_cluster(
    cfg: &ExperimentConfig,
    topo: &NetworkTopology,
    areas: &[usize],
    init: ActorCriticWeights,
    beta: f64,
    seed: u64,
) -> Result<TrainOutcome> {
    train_cluster_with(cfg, topo, areas, cfg.workers.ues_per_area, init, beta, seed, cfg.max_global_steps())
}

#[allow(clippy::too_many_arguments)]
pub fn train_cluster_with(
    cfg: &ExperimentConfig,
    topo: &NetworkTopology,
    areas: &[usize],
    ues_per_area: usize,
    init: ActorCriticWeights,
    beta: f64,
    seed: u64,
    max_global_steps: u64,
) -> Result<TrainOutcome> {
    if areas.is_empty() || ues_per_area == 0 {
        return Err(Error::invalid("a cluster needs at least one area and one UE"));
    }
    let wcfg = cfg.a3c.worker_config(max_global_steps);
    let mut workers = Vec::new();
    let mut area_workers = Vec::new();
    for &a in areas {
        let spec = Arc::new(
            topo.area(a)
                .ok_or_else(|| Error::invalid(format!("unknown area {a}")))?
                .clone(),
        );
        let mut ids = Vec::new();
        for _ in 0..ues_per_area {
            let id = workers.len();
            let mut rng = derived_rng(seed, STREAM_WORKER + id as u64);
            let env = make_env(cfg, &spec, beta, &mut rng)?;
            workers.push(Worker::new(id, env, rng, wcfg, cfg.nn.hidden));
            ids.push(id);
        }
        area_workers.push(ids);
    }
    if let Some(w) = delay_warning(workers.len(), max_global_steps) {
        log::warn!("{w}");
    }
    let server = Arc::new(ParameterServer::new(init, cfg.rmsprop));
    let mut logs = match cfg.a3c.scheduler {
        Scheduler::Simulated => train_simulated(&mut workers, &server, StopRule::steps(max_global_steps))?,
        Scheduler::Threads => {
            let reports = train_threads(&mut workers, &server)?;
            let mut all: Vec<SegmentLog> = reports.into_iter().flat_map(|r| r.segments).collect();
            all.sort_by_key(|l| l.global_step);
            all
        }
    };
    logs.sort_by_key(|l| l.global_step);
    let mut totals = SlotTotals::default();
    let mut dropped = 0;
    for w in &workers {
        totals.merge(w.totals());
        dropped += w.dropped_segments();
    }
    Ok(TrainOutcome {
        weights: server.weights(),
        server,
        logs,
        area_workers,
        totals,
        dropped_segments: dropped,
    })
}

/// Metrics of one newly arriving UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewUeMetrics {
    pub ho_rate: f64,
    pub throughput_bps: f64,
    pub slots: u64,
}

impl From<SlotTotals> for NewUeMetrics {
    fn from(t: SlotTotals) -> Self {
        Self {
            ho_rate: t.ho_rate(),
            throughput_bps: t.avg_throughput_bps(),
            slots: t.slots,
        }
    }
}

fn new_ue_env(cfg: &ExperimentConfig, area: &AreaSpec, beta: f64, seed: u64) -> Result<(HandoverEnv, SimRng)> {
    let mut rng = derived_rng(seed, STREAM_NEW_UE);
    let env = make_env(cfg, &Arc::new(area.clone()), beta, &mut rng)?;
    Ok((env, rng))
}

/// Frozen pretrained network controlling a fresh UE.
pub fn test_offline(
    cfg: &ExperimentConfig,
    area: &AreaSpec,
    weights: &ActorCriticWeights,
    beta: f64,
    seed: u64,
) -> Result<NewUeMetrics> {
    let (mut env, mut rng) = new_ue_env(cfg, area, beta, seed)?;
    let mut ctl = PolicyController::new(weights.clone(), false);
    Ok(run_for_slots(&mut ctl, &mut env, cfg.budgets.test_slots, cfg.budgets.max_episode_slots, &mut rng)?.into())
}

/// A fresh UE that keeps learning against the trained parameter server.
pub fn test_online(
    cfg: &ExperimentConfig,
    area: &AreaSpec,
    server: &ParameterServer,
    beta: f64,
    seed: u64,
) -> Result<NewUeMetrics> {
    let (env, rng) = new_ue_env(cfg, area, beta, seed)?;
    let mut worker = Worker::new(0, env, rng, cfg.a3c.worker_config(u64::MAX), cfg.nn.hidden);
    while worker.local_slots() < cfg.budgets.test_slots {
        let snap = server.fetch();
        let o = worker.compute_segment(&snap.weights)?;
        server.push(&o.grad, snap.global_step, o.transitions as u64)?;
    }
    Ok((*worker.totals()).into())
}

/// UCB from scratch, averaged over its learning and testing slots.
pub fn test_ucb(cfg: &ExperimentConfig, area: &AreaSpec, learn_slots: u64, beta: f64, seed: u64) -> Result<NewUeMetrics> {
    let (mut env, mut rng) = new_ue_env(cfg, area, beta, seed)?;
    let mut ctl = UcbController::new(area.sbs_count());
    let total = learn_slots + cfg.budgets.test_slots;
    Ok(run_for_slots(&mut ctl, &mut env, total, cfg.budgets.max_episode_slots, &mut rng)?.into())
}

/// The A3 rule controlling a fresh UE over the testing slots.
pub fn test_a3(cfg: &ExperimentConfig, area: &AreaSpec, params: A3Params, beta: f64, seed: u64) -> Result<NewUeMetrics> {
    let (mut env, mut rng) = new_ue_env(cfg, area, beta, seed)?;
    let mut ctl = A3Controller::new(params);
    Ok(run_for_slots(&mut ctl, &mut env, cfg.budgets.test_slots, cfg.budgets.max_episode_slots, &mut rng)?.into())
}

/// Per-UE learning slots of a cluster with `workers` UEs.
pub fn per_ue_learning_slots(cfg: &ExperimentConfig, workers: usize) -> u64 {
    cfg.budgets.train_steps / workers.max(1) as u64
}

/// Seed of run `index` of an experiment.
pub fn run_seed(cfg: &ExperimentConfig, index: u64) -> u64 {
    derive_seed(cfg.seed, index)
}
