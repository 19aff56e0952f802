//! The four experiments: HO-rate/throughput tradeoff over beta, learning
//! curves with and without SL init and clustering, the new-UE comparison
//! against UCB, and cluster-count validation.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scheduler};
use super::metrics::{unix_time, write_metrics, Manifest, MetricsRecord};
use super::training::{
    initial_weights, learning_curve, mobility_dataset, per_ue_learning_slots, random_weights, run_seed,
    sl_initialize, test_offline, test_online, test_ucb, train_cluster, training_areas, CurvePoint,
    NewUeMetrics, TrainOutcome,
};
use crate::clustering::{chi, kmeans_restarts, select_h};
use crate::error::{Error, Result};
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Tradeoff,
    LearningCurve,
    Comparison,
    ClusterValidation,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 4] = [
        ExperimentName::Tradeoff,
        ExperimentName::LearningCurve,
        ExperimentName::Comparison,
        ExperimentName::ClusterValidation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Tradeoff => "tradeoff",
            ExperimentName::LearningCurve => "learning_curve",
            ExperimentName::Comparison => "comparison",
            ExperimentName::ClusterValidation => "cluster_validation",
        }
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Config with every random stream (deployment included) rooted at `seed`.
pub fn with_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.seed = seed;
    c
}

fn mode_tag(clustering: bool) -> &'static str {
    if clustering {
        "cluster"
    } else {
        "single"
    }
}

/// Time column value of a curve point: the simulated system clock under the
/// simulated scheduler, elapsed real time with threads.
fn clock(cfg: &ExperimentConfig, p: &CurvePoint) -> f64 {
    match cfg.a3c.scheduler {
        Scheduler::Simulated => p.sim_time_s,
        Scheduler::Threads => p.wall_clock_s,
    }
}

fn outcome_clock(cfg: &ExperimentConfig, t: &TrainOutcome) -> f64 {
    t.logs
        .last()
        .map(|l| match cfg.a3c.scheduler {
            Scheduler::Simulated => l.sim_time_s,
            Scheduler::Threads => l.wall_clock_s,
        })
        .unwrap_or(0.0)
}

fn area0_curve(cfg: &ExperimentConfig, t: &TrainOutcome) -> Vec<CurvePoint> {
    learning_curve(&t.logs, &t.area_workers[0], cfg.max_global_steps(), cfg.budgets.eval_points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub seed: u64,
    pub beta: f64,
    pub global_step: u64,
    pub clock_s: f64,
    pub test: NewUeMetrics,
    pub final_mean_value: f64,
}

/// HO rate and throughput of a fresh UE under the policy trained with each
/// beta; the initial network is shared by all betas of a seed.
pub fn tradeoff_runs(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<TradeoffPoint>> {
    let c = with_seed(cfg, seed);
    let topo = c.build_topology();
    let areas = training_areas(&c, &topo, c.modes.clustering, seed)?;
    let area0 = Arc::new(topo.areas[0].clone());
    let init = initial_weights(&c, &area0, c.modes.sl_init, seed)?;
    let mut out = Vec::new();
    for &beta in &c.experiments.betas {
        let t = train_cluster(&c, &topo, &areas, init.clone(), beta, seed)?;
        let mut e = c.clone();
        e.budgets.test_slots = c.experiments.eval_slots;
        let test = if c.modes.online {
            test_online(&e, &topo.areas[0], &t.server, beta, seed)?
        } else {
            test_offline(&e, &topo.areas[0], &t.weights, beta, seed)?
        };
        let curve = area0_curve(&c, &t);
        out.push(TradeoffPoint {
            seed,
            beta,
            global_step: t.global_step(),
            clock_s: outcome_clock(&c, &t),
            test,
            final_mean_value: curve.last().map_or(0.0, |p| p.mean_value),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRun {
    pub seed: u64,
    pub sl_init: bool,
    pub clustering: bool,
    pub workers: usize,
    pub curve: Vec<CurvePoint>,
}

impl CurveRun {
    pub fn variant(&self) -> String {
        format!("{}_{}", if self.sl_init { "sl" } else { "random" }, mode_tag(self.clustering))
    }
}

/// State-value estimates of the area-0 UEs during training, for the four
/// SL-init x clustering variants. SL and random variants start from the same
/// random draw, so their value heads are identical at step 0.
pub fn learning_curve_runs(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<CurveRun>> {
    let c = with_seed(cfg, seed);
    let topo = c.build_topology();
    let area0 = Arc::new(topo.areas[0].clone());
    let random = random_weights(&c, seed);
    let sl = sl_initialize(&c, &area0, &random, seed)?.weights;
    let mut out = Vec::new();
    for sl_init in [true, false] {
        for clustering in [true, false] {
            let areas = training_areas(&c, &topo, clustering, seed)?;
            let init = if sl_init { sl.clone() } else { random.clone() };
            let t = train_cluster(&c, &topo, &areas, init, c.reward.beta, seed)?;
            out.push(CurveRun {
                seed,
                sl_init,
                clustering,
                workers: t.area_workers.iter().map(Vec::len).sum(),
                curve: area0_curve(&c, &t),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub clustering: bool,
    /// `ucb`, `a3c_online` or `a3c_offline`.
    pub method: String,
    pub global_step: u64,
    pub metrics: NewUeMetrics,
}

/// New-UE comparison in area 0. UCB learns from scratch for the same per-UE
/// learning time as the cluster's learners and is averaged over learning and
/// testing; the A3C variants are measured over the testing slots only.
pub fn comparison_runs(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ComparisonRow>> {
    let c = with_seed(cfg, seed);
    let topo = c.build_topology();
    let area0 = Arc::new(topo.areas[0].clone());
    let init = initial_weights(&c, &area0, c.modes.sl_init, seed)?;
    let beta = c.reward.beta;
    let mut out = Vec::new();
    for clustering in [true, false] {
        let areas = training_areas(&c, &topo, clustering, seed)?;
        let t = train_cluster(&c, &topo, &areas, init.clone(), beta, seed)?;
        let workers: usize = t.area_workers.iter().map(Vec::len).sum();
        let step = t.global_step();
        let offline = test_offline(&c, &area0, &t.weights, beta, seed)?;
        let online = test_online(&c, &area0, &t.server, beta, seed)?;
        let ucb = test_ucb(&c, &area0, per_ue_learning_slots(&c, workers), beta, seed)?;
        for (method, metrics) in [("ucb", ucb), ("a3c_online", online), ("a3c_offline", offline)] {
            out.push(ComparisonRow {
                seed,
                clustering,
                method: method.to_string(),
                global_step: step,
                metrics,
            });
        }
    }
    Ok(out)
}

/// Columns of the cluster-validation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterValidationRecord {
    pub experiment: String,
    pub seed: u64,
    pub timestamp: u64,
    pub total_ues: usize,
    pub h: usize,
    pub chi: f64,
    /// Cluster count chosen by the CHI rule for this dataset.
    pub selected_h: usize,
    /// Whether the chosen clustering put exactly the UEs of areas 0 and 1 in
    /// one cluster.
    pub first_two_areas_grouped: bool,
}

/// CHI for every candidate `h`, plus the selection, on one seeded dataset.
pub fn cluster_validation_run(cfg: &ExperimentConfig, ues_per_area: usize, seed: u64) -> Result<Vec<ClusterValidationRecord>> {
    let c = with_seed(cfg, seed);
    let topo = c.build_topology();
    let (features, ue_areas) = mobility_dataset(&c, &topo, ues_per_area, seed);
    let opts = c.clustering.kmeans_options();
    let mut rng = derived_rng(seed, 0xC1);
    let sel = select_h(&features, c.h_max(), c.clustering.tau, opts, &mut rng)?;
    let grouped = first_two_grouped(&sel.model.assignments, &ue_areas);
    let mut out = Vec::new();
    for &h in &c.experiments.cluster_validation_h {
        let model = kmeans_restarts(&features, h, c.clustering.tau, opts, &mut rng)?;
        out.push(ClusterValidationRecord {
            experiment: ExperimentName::ClusterValidation.as_str().to_string(),
            seed,
            timestamp: 0,
            total_ues: features.len(),
            h,
            chi: chi(&features, &model)?,
            selected_h: sel.model.h_count,
            first_two_areas_grouped: grouped,
        });
    }
    Ok(out)
}

/// True when the cluster of the area-0 UEs is exactly the UEs of areas 0 and 1.
pub fn first_two_grouped(assignments: &[usize], ue_areas: &[usize]) -> bool {
    let Some(first) = ue_areas.iter().position(|a| *a == 0) else {
        return false;
    };
    let g = assignments[first];
    assignments
        .iter()
        .zip(ue_areas)
        .all(|(h, a)| (*h == g) == (*a <= 1))
}

/// Runs one experiment, writing `<name>.csv` and `<name>_manifest.json` to
/// `out_dir`. Returns the written paths.
pub fn run_experiment(name: ExperimentName, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", name.as_str()));
    let exp = name.as_str().to_string();
    let now = unix_time();
    let record = |seed, global_step, clock, ho, thr, value, beta, variant: String| MetricsRecord {
        experiment: exp.clone(),
        seed,
        timestamp: now,
        global_step,
        wall_clock_s: clock,
        ho_rate: ho,
        throughput_bps: thr,
        mean_value: value,
        beta,
        variant,
    };
    match name {
        ExperimentName::Tradeoff => {
            let mut rows = Vec::new();
            for i in 0..cfg.experiments.seeds {
                let seed = run_seed(cfg, i);
                for p in tradeoff_runs(cfg, seed)? {
                    rows.push(record(
                        seed,
                        p.global_step,
                        p.clock_s,
                        Some(p.test.ho_rate),
                        Some(p.test.throughput_bps),
                        Some(p.final_mean_value),
                        p.beta,
                        if cfg.modes.online { "a3c_online" } else { "a3c_offline" }.to_string(),
                    ));
                }
            }
            write_metrics(&csv_path, &rows)?;
        }
        ExperimentName::LearningCurve => {
            let mut rows = Vec::new();
            for i in 0..cfg.experiments.seeds {
                let seed = run_seed(cfg, i);
                for run in learning_curve_runs(cfg, seed)? {
                    for p in &run.curve {
                        rows.push(record(
                            seed,
                            p.global_step,
                            clock(cfg, p),
                            p.ho_rate,
                            p.throughput_bps,
                            Some(p.mean_value),
                            cfg.reward.beta,
                            run.variant(),
                        ));
                    }
                }
            }
            write_metrics(&csv_path, &rows)?;
        }
        ExperimentName::Comparison => {
            let mut rows = Vec::new();
            for i in 0..cfg.experiments.effective_comparison_seeds() {
                let seed = run_seed(cfg, i);
                for r in comparison_runs(cfg, seed)? {
                    rows.push(record(
                        seed,
                        r.global_step,
                        0.0,
                        Some(r.metrics.ho_rate),
                        Some(r.metrics.throughput_bps),
                        None,
                        cfg.reward.beta,
                        format!("{}_{}", r.method, mode_tag(r.clustering)),
                    ));
                }
            }
            write_metrics(&csv_path, &rows)?;
        }
        ExperimentName::ClusterValidation => {
            let mut w = csv::Writer::from_writer(File::create(&csv_path)?);
            for &n in &cfg.experiments.cluster_validation_ues_per_area {
                for i in 0..cfg.experiments.cluster_validation_seeds {
                    for mut r in cluster_validation_run(cfg, n, run_seed(cfg, i))? {
                        r.timestamp = now;
                        w.serialize(r)?;
                    }
                }
            }
            w.flush()?;
        }
    }
    let manifest_path = out_dir.join(format!("{}_manifest.json", name.as_str()));
    let files = vec![csv_path.clone()];
    Manifest::new(name.as_str(), cfg, &files).write(&manifest_path)?;
    Ok(vec![csv_path, manifest_path])
}
