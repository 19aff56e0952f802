//! `handover`: command-line front end for clustering, SL initialization,
//! training, evaluation and the experiment suite.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use handover_core::baselines::A3Params;
use handover_core::harness::config::{env_overrides, parse_config, ExperimentConfig};
use handover_core::harness::experiments::{run_experiment, ExperimentName};
use handover_core::harness::metrics::{unix_time, write_metrics, Manifest, MetricsRecord};
use handover_core::harness::training::{
    initial_weights, learning_curve, per_ue_learning_slots, plan_clusters, random_weights, sl_initialize,
    test_a3, test_offline, test_online, test_ucb, train_cluster_with, NewUeMetrics,
};
use handover_core::nn::Checkpoint;
use handover_core::params::ParameterServer;
use handover_core::rng::derive_seed;
use handover_core::Error;

#[derive(Parser)]
#[command(name = "handover", version, about = "Clustered asynchronous actor-critic handover laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster simulated UEs by mobility pattern and map clusters to areas.
    Cluster(Common),
    /// Clone the A3 rule into one initial network per cluster.
    SlInit(Common),
    /// Train one parameter server per cluster.
    Train {
        #[command(flatten)]
        common: Common,
        /// Initial network for every cluster instead of the configured init.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Test a trained checkpoint on a fresh UE against the baselines.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Area the fresh UE moves in.
        #[arg(long, default_value_t = 0)]
        area: usize,
    },
    /// Run one experiment: tradeoff, learning_curve, comparison or cluster_validation.
    Experiment {
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

fn usage(error: Error) -> Failure {
    Failure { code: 2, error }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) | Error::Toml(_) | Error::UnknownExperiment(_) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

type Outcome = std::result::Result<Vec<PathBuf>, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| usage(Error::Config(vec![format!("cannot read {}: {e}", p.display())])))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text, env_overrides(std::env::vars())).map_err(usage)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Cluster(c) => cluster(&load(&c)?, &c.out),
        Command::SlInit(c) => sl_init(&load(&c)?, &c.out),
        Command::Train { common, init } => train(&load(&common)?, &common.out, init.as_deref()),
        Command::Evaluate { common, checkpoint, area } => evaluate(&load(&common)?, &common.out, &checkpoint, area),
        Command::Experiment { name, common } => {
            let name = ExperimentName::from_str(&name).map_err(usage)?;
            let cfg = load(&common)?;
            Ok(run_experiment(name, &cfg, &common.out)?)
        }
    }
}

fn finish(verb: &str, cfg: &ExperimentConfig, out: &Path, mut files: Vec<PathBuf>) -> Outcome {
    let manifest = out.join(format!("{verb}_manifest.json"));
    Manifest::new(verb, cfg, &files).write(&manifest).map_err(Failure::from)?;
    files.push(manifest);
    Ok(files)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure {
        code: 1,
        error: Error::InvalidInput(format!("checkpoint {}: {e}", path.display())),
    })
}

fn io(e: std::io::Error) -> Failure {
    Error::from(e).into()
}

fn cluster(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    std::fs::create_dir_all(out).map_err(io)?;
    let topo = cfg.build_topology();
    let plan = plan_clusters(cfg, &topo, cfg.seed)?;
    let plan_path = out.join("cluster_plan.json");
    serde_json::to_writer_pretty(File::create(&plan_path).map_err(io)?, &plan).map_err(Error::from)?;
    let mut files = vec![plan_path];
    if let Some(sel) = &plan.selection {
        let path = out.join("clusters.csv");
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        w.write_record(["ue", "area", "cluster"]).map_err(Error::from)?;
        for (ue, (h, area)) in sel.model.assignments.iter().zip(&plan.ue_areas).enumerate() {
            w.write_record([ue.to_string(), area.to_string(), h.to_string()]).map_err(Error::from)?;
        }
        w.flush().map_err(io)?;
        files.push(path);
    }
    finish("cluster", cfg, out, files)
}

fn cluster_groups(cfg: &ExperimentConfig, topo: &handover_core::NetworkTopology) -> Result<Vec<Vec<usize>>, Failure> {
    if cfg.modes.clustering {
        Ok(plan_clusters(cfg, topo, cfg.seed)?.groups)
    } else {
        Ok((0..topo.areas.len()).map(|a| vec![a]).collect())
    }
}

fn sl_init(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    std::fs::create_dir_all(out).map_err(io)?;
    let topo = cfg.build_topology();
    let groups = cluster_groups(cfg, &topo)?;
    let loss_path = out.join("sl_init_loss.csv");
    let mut w = csv::Writer::from_path(&loss_path).map_err(Error::from)?;
    w.write_record(["cluster", "epoch", "loss"]).map_err(Error::from)?;
    let mut files = Vec::new();
    for (g, areas) in groups.iter().enumerate() {
        let seed = derive_seed(cfg.seed, g as u64);
        let area = Arc::new(topo.areas[areas[0]].clone());
        let outcome = sl_initialize(cfg, &area, &random_weights(cfg, seed), seed)?;
        if outcome.diverged {
            log::warn!("cluster {g}: cloning loss ended above its initial value");
        }
        for (e, l) in outcome.loss_history.iter().enumerate() {
            w.write_record([g.to_string(), e.to_string(), l.to_string()]).map_err(Error::from)?;
        }
        let mut ck = Checkpoint::from_weights(&outcome.weights);
        ck.meta.insert("areas".into(), serde_json::json!(areas));
        ck.meta.insert("diverged".into(), outcome.diverged.into());
        ck.meta.insert("monotone".into(), outcome.monotone.into());
        let path = out.join(format!("sl_init_cluster{g}.json"));
        ck.save(&path)?;
        files.push(path);
    }
    w.flush().map_err(io)?;
    files.push(loss_path);
    finish("sl_init", cfg, out, files)
}

fn train(cfg: &ExperimentConfig, out: &Path, init: Option<&Path>) -> Outcome {
    std::fs::create_dir_all(out).map_err(io)?;
    let topo = cfg.build_topology();
    let groups = cluster_groups(cfg, &topo)?;
    let given = match init {
        Some(p) => Some(load_checkpoint(p)?.weights("")?),
        None => None,
    };
    let now = unix_time();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (g, areas) in groups.iter().enumerate() {
        let seed = derive_seed(cfg.seed, g as u64);
        let start = match &given {
            Some(w) => w.clone(),
            None => initial_weights(cfg, &Arc::new(topo.areas[areas[0]].clone()), cfg.modes.sl_init, seed)?,
        };
        let t = train_cluster_with(
            cfg,
            &topo,
            areas,
            cfg.workers.ues_per_area,
            start,
            cfg.reward.beta,
            seed,
            cfg.max_global_steps(),
        )?;
        let ids: Vec<usize> = t.area_workers.concat();
        for p in learning_curve(&t.logs, &ids, cfg.max_global_steps(), cfg.budgets.eval_points) {
            rows.push(MetricsRecord {
                experiment: "train".into(),
                seed: cfg.seed,
                timestamp: now,
                global_step: p.global_step,
                wall_clock_s: match cfg.a3c.scheduler {
                    handover_core::harness::config::Scheduler::Simulated => p.sim_time_s,
                    handover_core::harness::config::Scheduler::Threads => p.wall_clock_s,
                },
                ho_rate: p.ho_rate,
                throughput_bps: p.throughput_bps,
                mean_value: Some(p.mean_value),
                beta: cfg.reward.beta,
                variant: format!("cluster{g}"),
            });
        }
        let mut ck = t.server.checkpoint();
        ck.meta.insert("areas".into(), serde_json::json!(areas));
        ck.meta.insert("workers".into(), ids.len().into());
        ck.meta.insert("dropped_segments".into(), t.dropped_segments.into());
        let path = out.join(format!("checkpoint_cluster{g}.json"));
        ck.save(&path)?;
        files.push(path);
    }
    let csv_path = out.join("train.csv");
    write_metrics(&csv_path, &rows)?;
    files.push(csv_path);
    finish("train", cfg, out, files)
}

fn evaluate(cfg: &ExperimentConfig, out: &Path, checkpoint: &Path, area: usize) -> Outcome {
    let topo = cfg.build_topology();
    let Some(spec) = topo.areas.get(area) else {
        return Err(usage(Error::Config(vec![format!(
            "--area {area} out of range (topology has {} areas)",
            topo.areas.len()
        )])));
    };
    std::fs::create_dir_all(out).map_err(io)?;
    let ck = load_checkpoint(checkpoint)?;
    let weights = ck.weights("")?;
    let workers = ck
        .meta
        .get("workers")
        .and_then(|v| v.as_u64())
        .map_or(cfg.workers.ues_per_area, |w| w as usize);
    let step = ck.meta.get("global_step").and_then(|v| v.as_u64()).unwrap_or(0);
    let beta = cfg.reward.beta;
    let seed = cfg.seed;
    let mut results: Vec<(&str, NewUeMetrics)> = vec![("a3c_offline", test_offline(cfg, spec, &weights, beta, seed)?)];
    if cfg.modes.online {
        let server = ParameterServer::from_checkpoint(&ck, cfg.rmsprop)?;
        results.push(("a3c_online", test_online(cfg, spec, &server, beta, seed)?));
    }
    results.push(("a3", test_a3(cfg, spec, A3Params::new(3.0, 2), beta, seed)?));
    results.push(("ucb", test_ucb(cfg, spec, per_ue_learning_slots(cfg, workers), beta, seed)?));
    let now = unix_time();
    let rows: Vec<MetricsRecord> = results
        .into_iter()
        .map(|(variant, m)| MetricsRecord {
            experiment: "evaluate".into(),
            seed,
            timestamp: now,
            global_step: step,
            wall_clock_s: 0.0,
            ho_rate: Some(m.ho_rate),
            throughput_bps: Some(m.throughput_bps),
            mean_value: None,
            beta,
            variant: variant.into(),
        })
        .collect();
    let path = out.join("evaluate.csv");
    write_metrics(&path, &rows)?;
    finish("evaluate", cfg, out, vec![path])
}
