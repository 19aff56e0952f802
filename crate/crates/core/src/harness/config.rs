//! Experiment configuration: one TOML document whose every key has a default,
//! overridable through `HANDOVER_<SECTION>__<KEY>` environment variables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::a3c::WorkerConfig;
use crate::baselines::{default_a3_pairs, A3Params};
use crate::clustering::KMeansOptions;
use crate::env::{RewardConfig, SnrNormalizer};
use crate::error::{Error, Result};
use crate::mobility::AreaSpec;
use crate::nn::NetDims;
use crate::params::RmsPropConfig;
use crate::radio::RadioConfig;
use crate::rng::{derive_seed, rng_from_seed};
use crate::slinit::CloneConfig;
use crate::topology::{random_deployment, NetworkTopology, Point};

pub const ENV_PREFIX: &str = "HANDOVER_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaConfig {
    /// East, south, west, north.
    pub direction_probs: [f64; 4],
    pub speed_range: [f64; 2],
    /// Explicit SBS coordinates; drawn uniformly from the deployment seed
    /// when absent.
    pub sbs_positions: Option<Vec<[f64; 2]>>,
}

impl Default for AreaConfig {
    fn default() -> Self {
        Self {
            direction_probs: [0.25; 4],
            speed_range: [1.0, 3.0],
            sbs_positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub sbs_per_area: usize,
    /// Seed of the SBS deployment; derived from the run seed when absent.
    pub deployment_seed: Option<u64>,
    pub areas: Vec<AreaConfig>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        let skewed = AreaConfig {
            direction_probs: [0.6, 0.2, 0.1, 0.1],
            ..AreaConfig::default()
        };
        Self {
            width_m: 16.0,
            height_m: 16.0,
            sbs_per_area: 6,
            deployment_seed: None,
            areas: vec![AreaConfig::default(), AreaConfig::default(), skewed],
        }
    }
}

/// How areas are grouped into learning clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterAssignment {
    /// Each area joins the K-means cluster holding most of its UEs.
    Kmeans,
    /// Areas with identical direction probabilities and speed ranges share a
    /// cluster.
    MobilityProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub tau: f64,
    /// Largest candidate cluster count; the number of areas when absent.
    pub h_max: Option<usize>,
    pub restarts: usize,
    pub max_iters: usize,
    /// Observation window in slots.
    pub t_u: usize,
    pub ues_per_area: usize,
    pub assignment: ClusterAssignment,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            h_max: None,
            restarts: 10,
            max_iters: 300,
            t_u: 150,
            ues_per_area: 4,
            assignment: ClusterAssignment::Kmeans,
        }
    }
}

impl ClusteringConfig {
    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions {
            max_iters: self.max_iters,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden: usize,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self { hidden: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// Deterministic discrete-event schedule on the simulated clock.
    Simulated,
    /// One OS thread per worker.
    Threads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A3cConfig {
    pub n: usize,
    pub gamma: f64,
    pub entropy_coeff: f64,
    pub grad_clip_norm: f64,
    pub reward_scale: f64,
    pub scheduler: Scheduler,
}

impl Default for A3cConfig {
    fn default() -> Self {
        let w = WorkerConfig::default();
        Self {
            n: w.n,
            gamma: 0.95,
            entropy_coeff: w.entropy_coeff,
            grad_clip_norm: w.grad_clip_norm,
            reward_scale: w.reward_scale,
            scheduler: Scheduler::Simulated,
        }
    }
}

impl A3cConfig {
    pub fn worker_config(&self, max_global_steps: u64) -> WorkerConfig {
        WorkerConfig {
            n: self.n,
            gamma: self.gamma,
            entropy_coeff: self.entropy_coeff,
            max_global_steps,
            grad_clip_norm: self.grad_clip_norm,
            reward_scale: self.reward_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkersConfig {
    /// Learning UEs contributed by every area of a cluster.
    pub ues_per_area: usize,
}

impl Default for WorkersConfig {
    fn default() -> Self {
        Self { ues_per_area: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Environment transitions per cluster, summed over its workers.
    pub train_steps: u64,
    /// Slots a newly arriving UE is tested for.
    pub test_slots: u64,
    /// Cap on a single evaluation episode.
    pub max_episode_slots: u64,
    /// Points of the learning curve.
    pub eval_points: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            train_steps: 200_000,
            test_slots: 2_000,
            max_episode_slots: 2_000,
            eval_points: 50,
        }
    }
}

impl BudgetConfig {
    /// Push budget matching `train_steps` for full-length segments.
    pub fn max_global_steps(&self, n: usize) -> u64 {
        self.train_steps.div_ceil(n.max(1) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlInitConfig {
    pub pairs: Vec<A3Params>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub block: usize,
    pub min_episode_slots: usize,
    pub max_episode_slots: usize,
}

impl Default for SlInitConfig {
    fn default() -> Self {
        let c = CloneConfig::default();
        Self {
            pairs: default_a3_pairs(),
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            block: c.block,
            min_episode_slots: 500,
            max_episode_slots: 2_000,
        }
    }
}

impl SlInitConfig {
    pub fn clone_config(&self) -> CloneConfig {
        CloneConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            block: self.block,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    pub sl_init: bool,
    pub clustering: bool,
    /// Newly arriving UEs keep learning (on-line) or run frozen (off-line).
    pub online: bool,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            sl_init: true,
            clustering: true,
            online: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsConfig {
    /// Seeds of the tradeoff and learning-curve experiments.
    pub seeds: u64,
    pub betas: Vec<f64>,
    pub comparison_seeds: u64,
    /// Runs the comparison over `full_comparison_seeds` instead.
    pub full_comparison: bool,
    pub full_comparison_seeds: u64,
    pub cluster_validation_ues_per_area: Vec<usize>,
    pub cluster_validation_seeds: u64,
    pub cluster_validation_h: Vec<usize>,
    /// Test slots of the frozen or on-line policy in the tradeoff sweep.
    pub eval_slots: u64,
}

impl Default for ExperimentsConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            betas: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            comparison_seeds: 50,
            full_comparison: false,
            full_comparison_seeds: 500,
            cluster_validation_ues_per_area: vec![4, 40, 400],
            cluster_validation_seeds: 100,
            cluster_validation_h: vec![2, 3],
            eval_slots: 20_000,
        }
    }
}

impl ExperimentsConfig {
    pub fn effective_comparison_seeds(&self) -> u64 {
        if self.full_comparison {
            self.full_comparison_seeds
        } else {
            self.comparison_seeds
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub topology: TopologyConfig,
    pub radio: RadioConfig,
    pub reward: RewardConfig,
    pub normalizer: SnrNormalizer,
    pub clustering: ClusteringConfig,
    pub nn: NnConfig,
    pub a3c: A3cConfig,
    pub rmsprop: RmsPropConfig,
    pub workers: WorkersConfig,
    pub budgets: BudgetConfig,
    pub slinit: SlInitConfig,
    pub modes: ModeConfig,
    pub experiments: ExperimentsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            topology: TopologyConfig::default(),
            radio: RadioConfig::default(),
            reward: RewardConfig::default(),
            normalizer: SnrNormalizer::default(),
            clustering: ClusteringConfig::default(),
            nn: NnConfig::default(),
            a3c: A3cConfig::default(),
            rmsprop: RmsPropConfig::default(),
            workers: WorkersConfig::default(),
            budgets: BudgetConfig::default(),
            slinit: SlInitConfig::default(),
            modes: ModeConfig::default(),
            experiments: ExperimentsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Collects every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let t = &self.topology;
        if !(t.width_m > 0.0 && t.height_m > 0.0) {
            e.push("topology.width_m and topology.height_m must be > 0".to_string());
        }
        if t.sbs_per_area < 2 {
            e.push("topology.sbs_per_area must be >= 2".to_string());
        }
        if t.areas.is_empty() {
            e.push("topology.areas must not be empty".to_string());
        }
        for (i, a) in t.areas.iter().enumerate() {
            let sum: f64 = a.direction_probs.iter().sum();
            if a.direction_probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                e.push(format!(
                    "topology.areas[{i}].direction_probs must be non-negative and sum to 1 (sum = {sum})"
                ));
            }
            let [lo, hi] = a.speed_range;
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                e.push(format!("topology.areas[{i}].speed_range must satisfy 0 <= min <= max"));
            }
            if let Some(p) = &a.sbs_positions {
                if p.len() != t.sbs_per_area {
                    e.push(format!(
                        "topology.areas[{i}].sbs_positions must list {} positions",
                        t.sbs_per_area
                    ));
                }
                if p.iter().any(|[x, y]| !(0.0..=t.width_m).contains(x) || !(0.0..=t.height_m).contains(y)) {
                    e.push(format!("topology.areas[{i}].sbs_positions must lie inside the area"));
                }
            }
        }
        self.radio.validate("radio", &mut e);
        self.reward.validate("reward", &mut e);
        self.normalizer.validate("normalizer", &mut e);
        let c = &self.clustering;
        if !(0.0..=1.0).contains(&c.tau) {
            e.push("clustering.tau must lie in [0, 1]".to_string());
        }
        if c.h_max.is_some_and(|h| h < 2) {
            e.push("clustering.h_max must be >= 2".to_string());
        }
        if c.restarts == 0 || c.max_iters == 0 {
            e.push("clustering.restarts and clustering.max_iters must be >= 1".to_string());
        }
        if c.t_u == 0 {
            e.push("clustering.t_u must be >= 1".to_string());
        }
        if c.ues_per_area == 0 {
            e.push("clustering.ues_per_area must be >= 1".to_string());
        }
        if self.nn.hidden == 0 {
            e.push("nn.hidden must be >= 1".to_string());
        }
        self.a3c.worker_config(0).validate("a3c", &mut e);
        self.rmsprop.validate("rmsprop", &mut e);
        if self.workers.ues_per_area == 0 {
            e.push("workers.ues_per_area must be >= 1".to_string());
        }
        let b = &self.budgets;
        if b.test_slots == 0 || b.max_episode_slots == 0 {
            e.push("budgets.test_slots and budgets.max_episode_slots must be >= 1".to_string());
        }
        if b.eval_points == 0 {
            e.push("budgets.eval_points must be >= 1".to_string());
        }
        let s = &self.slinit;
        if s.pairs.is_empty() {
            e.push("slinit.pairs must not be empty".to_string());
        }
        for (i, p) in s.pairs.iter().enumerate() {
            if s.pairs[..i].contains(p) {
                e.push(format!("slinit.pairs[{i}] duplicates an earlier pair"));
            }
        }
        self.slinit.clone_config().validate("slinit", &mut e);
        if s.max_episode_slots < s.min_episode_slots.max(1) {
            e.push("slinit.max_episode_slots must be >= slinit.min_episode_slots".to_string());
        }
        let x = &self.experiments;
        if x.seeds == 0 || x.effective_comparison_seeds() == 0 || x.cluster_validation_seeds == 0 {
            e.push("experiments seed counts must be >= 1".to_string());
        }
        if x.betas.is_empty() {
            e.push("experiments.betas must not be empty".to_string());
        }
        for (i, b) in x.betas.iter().enumerate() {
            if !(*b >= 0.0 && b.is_finite()) {
                e.push(format!("experiments.betas[{i}] must be >= 0 (got {b})"));
            }
        }
        if x.eval_slots == 0 {
            e.push("experiments.eval_slots must be >= 1".to_string());
        }
        if x.cluster_validation_h.iter().any(|h| *h < 2) {
            e.push("experiments.cluster_validation_h entries must be >= 2".to_string());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    pub fn net_dims(&self) -> NetDims {
        NetDims::for_sbs(self.topology.sbs_per_area, self.nn.hidden)
    }

    pub fn h_max(&self) -> usize {
        self.clustering.h_max.unwrap_or(self.topology.areas.len()).max(2)
    }

    pub fn max_global_steps(&self) -> u64 {
        self.budgets.max_global_steps(self.a3c.n)
    }

    /// Areas with SBSs either listed explicitly or deployed from the seed.
    pub fn build_topology(&self) -> NetworkTopology {
        let t = &self.topology;
        let seed = t.deployment_seed.unwrap_or_else(|| derive_seed(self.seed, 0x70b0));
        let mut rng = rng_from_seed(seed);
        let areas = t
            .areas
            .iter()
            .enumerate()
            .map(|(id, a)| {
                let drawn = random_deployment(t.sbs_per_area, t.width_m, t.height_m, &mut rng);
                let sbs_positions = match &a.sbs_positions {
                    Some(p) => p.iter().map(|[x, y]| Point::new(*x, *y)).collect(),
                    None => drawn,
                };
                AreaSpec {
                    id,
                    width_m: t.width_m,
                    height_m: t.height_m,
                    sbs_positions,
                    direction_probs: a.direction_probs,
                    speed_range: (a.speed_range[0], a.speed_range[1]),
                }
            })
            .collect();
        NetworkTopology { areas }
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a TOML document, applying overrides on top of it before defaults
/// fill the remaining keys.
pub fn parse_config<I>(text: &str, overrides: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: toml::Table = text.parse()?;
    let mut errors = Vec::new();
    for (key, value) in overrides {
        if let Err(msg) = apply_override(&mut table, &key, &value) {
            errors.push(msg);
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `HANDOVER_A3C__GAMMA=0.9` becomes `("a3c.gamma", "0.9")`.
pub fn env_overrides<I>(vars: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            (!rest.is_empty()).then(|| (rest.to_ascii_lowercase().replace("__", "."), v))
        })
        .collect();
    out.sort();
    out
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> std::result::Result<(), String> {
    let value = parse_value(raw);
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| format!("bad override key {key:?}"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override {key:?}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, env_overrides(std::env::vars()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config(text, Vec::new())
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.topology.areas.len(), 3);
        assert_eq!(cfg.topology.areas[2].direction_probs, [0.6, 0.2, 0.1, 0.1]);
        assert_eq!(cfg.radio.tx_power_dbm, 30.0);
        assert_eq!(cfg.reward.energy_per_ho, 0.3);
        assert_eq!(cfg.a3c.n, 20);
        assert_eq!(cfg.a3c.entropy_coeff, 0.01);
        assert_eq!(cfg.rmsprop.decay, 0.99);
        assert_eq!(cfg.clustering.t_u, 150);
        assert_eq!(cfg.h_max(), 3);
    }

    #[test]
    fn negative_beta_names_the_field() {
        let err = parse("[reward]\nbeta = -1.0\n").unwrap_err();
        let Error::Config(msgs) = err else { panic!("{err}") };
        assert!(msgs.iter().any(|m| m.contains("reward.beta")), "{msgs:?}");
    }

    #[test]
    fn bad_direction_probs_rejected() {
        let text = "[[topology.areas]]\ndirection_probs = [0.3, 0.3, 0.2, 0.1]\n";
        let Error::Config(msgs) = parse(text).unwrap_err() else { panic!() };
        assert!(msgs.iter().any(|m| m.contains("areas[0].direction_probs")), "{msgs:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "[reward]\nbeta = -1.0\n[a3c]\ngamma = 1.5\nn = 0\n";
        let Error::Config(msgs) = parse(text).unwrap_err() else { panic!() };
        assert!(msgs.len() >= 3, "{msgs:?}");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse("[a3c]\ngama = 0.9\n").is_err());
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let vars = vec![
            ("HANDOVER_A3C__GAMMA".to_string(), "0.9".to_string()),
            ("HANDOVER_SEED".to_string(), "7".to_string()),
            ("HANDOVER_A3C__SCHEDULER".to_string(), "threads".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let cfg = parse_config("[a3c]\ngamma = 0.5\n", env_overrides(vars)).unwrap();
        assert_eq!(cfg.a3c.gamma, 0.9);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.a3c.scheduler, Scheduler::Threads);
    }

    #[test]
    fn toml_roundtrip_and_hash() {
        let cfg = ExperimentConfig::default();
        let back = parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn topology_is_seeded() {
        let cfg = ExperimentConfig::default();
        let a = cfg.build_topology();
        assert_eq!(a, cfg.build_topology());
        assert_eq!(a.areas.len(), 3);
        for area in &a.areas {
            assert_eq!(area.sbs_count(), 6);
            let mut errs = Vec::new();
            area.validate("a", &mut errs);
            assert!(errs.is_empty(), "{errs:?}");
        }
        let mut other = cfg.clone();
        other.seed = 9;
        assert_ne!(other.build_topology(), a);
    }
}
