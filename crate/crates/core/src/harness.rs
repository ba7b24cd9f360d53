//! Experiment orchestration: seeded trials, greedy evaluation, aggregation,
//! reward-versus-size curves and grid sweeps.
//!
//! Every trial owns its environment, tree and random streams, so trials run
//! in parallel and the results are still fully determined by the config and
//! the seeds.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, RawConfig};
use crate::cqi::{CqiParams, CqiTrainer};
use crate::env::{EnvError, Environment, RobotNav, RobotNavConfig};
use crate::export::{export_tree, ExportFormat, Policy};
use crate::learner::{run, Checkpoint, TrainError, TrainOptions, TrainOutcome};
use crate::metrics::MetricsLog;
use crate::pyeatt::{PyeattParams, PyeattTrainer};
use crate::tree::PolicyTree;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("sweep needs about {estimate} environment steps, over the cap of {cap}")]
    BudgetExceeded { estimate: u128, cap: u128 },
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Cqi(CqiParams),
    Pyeatt(PyeattParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cqi(_) => "cqi",
            Method::Pyeatt(_) => "pyeatt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub env: RobotNavConfig,
    pub train_steps: u64,
    pub eval_steps: u64,
    /// One trial per seed.
    pub seeds: Vec<u64>,
    /// Where to write per-trial files; `None` keeps everything in memory.
    pub output_dir: Option<PathBuf>,
    /// Evaluate every pre-split checkpoint to build a reward/size curve.
    pub record_curve: bool,
    pub write_metrics: bool,
    /// Trials whose final evaluation reward is at or below this are flagged
    /// as unsuccessful.
    pub failure_reward: f64,
}

impl ExperimentConfig {
    pub fn new(method: Method, env: RobotNavConfig, train_steps: u64, eval_steps: u64, seeds: Vec<u64>) -> Self {
        Self {
            method,
            env,
            train_steps,
            eval_steps,
            seeds,
            output_dir: None,
            record_curve: false,
            write_metrics: false,
            failure_reward: -50.0,
        }
    }

    pub fn trials(&self) -> usize {
        self.seeds.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.train_steps < 1 || self.eval_steps < 1 {
            return Err(HarnessError::Invalid("train and eval steps must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("at least one trial is required".into()));
        }
        self.env.validate()?;
        let checked = match &self.method {
            Method::Cqi(p) => p.validate(),
            Method::Pyeatt(p) => p.validate(),
        };
        checked.map_err(|e| HarnessError::Invalid(e.to_string()))
    }
}

/// Reward collected by a greedy rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub episodes: u64,
    pub total_reward: f64,
}

impl Evaluation {
    /// Average reward per completed episode; `None` when no episode finished.
    pub fn average(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.total_reward / self.episodes as f64)
    }
}

/// Runs `policy` greedily for `eval_steps` steps. Only completed episodes
/// count; the reward of a trailing unfinished episode is dropped.
pub fn evaluate_policy<P, E, R>(policy: &P, env: &mut E, eval_steps: u64, rng: &mut R) -> Result<Evaluation, EnvError>
where
    P: Policy + ?Sized,
    E: Environment,
    R: Rng + ?Sized,
{
    let mut state = env.reset(rng)?;
    let mut episodes = 0;
    let mut total = 0.0;
    let mut current = 0.0;
    for _ in 0..eval_steps {
        let t = env.step(policy.act(&state), rng)?;
        current += t.reward;
        if t.done {
            episodes += 1;
            total += current;
            current = 0.0;
            state = env.reset(rng)?;
        } else {
            state = t.next_state;
        }
    }
    Ok(Evaluation {
        episodes,
        total_reward: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub size: usize,
    pub reward: Option<f64>,
}

/// Evaluates each pre-split checkpoint and then the final tree, giving
/// `(size, reward)` pairs in split order.
pub fn size_reward_curve(
    checkpoints: &[Checkpoint],
    final_tree: &PolicyTree,
    env: &RobotNavConfig,
    eval_steps: u64,
    seed: u64,
) -> Result<Vec<CurvePoint>, EnvError> {
    checkpoints
        .iter()
        .map(|c| &c.tree)
        .chain(std::iter::once(final_tree))
        .map(|tree| {
            let mut env = RobotNav::new(env.clone())?;
            let eval = evaluate_policy(tree, &mut env, eval_steps, &mut eval_rng(seed))?;
            Ok(CurvePoint {
                size: tree.size(),
                reward: eval.average(),
            })
        })
        .collect()
}

pub fn train_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for evaluation rollouts, so evaluation never shifts
/// the training stream.
pub fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Trains with `method` on a fresh environment.
pub fn train(method: &Method, env: &RobotNavConfig, steps: u64, seed: u64, options: TrainOptions) -> Result<TrainOutcome, TrainError> {
    let nav = RobotNav::new(env.clone())?;
    match method {
        Method::Cqi(p) => run(CqiTrainer::new(nav, *p, train_rng(seed), options)?, steps),
        Method::Pyeatt(p) => run(PyeattTrainer::new(nav, *p, train_rng(seed), options)?, steps),
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub tree_size: usize,
    pub evaluation: Evaluation,
    pub curve: Vec<CurvePoint>,
    pub successful: bool,
    pub tree: PolicyTree,
    pub metrics: MetricsLog,
}

impl TrialResult {
    pub fn reward(&self) -> Option<f64> {
        self.evaluation.average()
    }
}

#[derive(Debug, Clone)]
pub enum TrialStatus {
    Completed(Box<TrialResult>),
    Failed { seed: u64, reason: String },
}

impl TrialStatus {
    pub fn result(&self) -> Option<&TrialResult> {
        match self {
            TrialStatus::Completed(r) => Some(r),
            TrialStatus::Failed { .. } => None,
        }
    }
}

pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialResult, TrainError> {
    let options = TrainOptions {
        record_metrics: config.write_metrics,
        record_checkpoints: config.record_curve,
    };
    let outcome = train(&config.method, &config.env, config.train_steps, seed, options)?;
    let tree = outcome.tree.without_ledgers();
    let mut env = RobotNav::new(config.env.clone())?;
    let evaluation = evaluate_policy(&tree, &mut env, config.eval_steps, &mut eval_rng(seed))?;
    let curve = if config.record_curve {
        size_reward_curve(&outcome.checkpoints, &tree, &config.env, config.eval_steps, seed)?
    } else {
        Vec::new()
    };
    let successful = evaluation.average().is_some_and(|r| r > config.failure_reward);
    Ok(TrialResult {
        seed,
        tree_size: tree.size(),
        evaluation,
        curve,
        successful,
        tree,
        metrics: outcome.metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub stddev: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, stddev, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub size: Option<Stat>,
    pub reward: Option<Stat>,
    pub failed: usize,
    pub unsuccessful: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub trials: Vec<TrialStatus>,
    pub aggregate: Aggregate,
}

impl ExperimentResult {
    pub fn completed(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter_map(TrialStatus::result)
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.completed().map(|t| t.tree_size as f64).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.completed().filter_map(TrialResult::reward).collect()
    }
}

pub fn aggregate(trials: &[TrialStatus]) -> Aggregate {
    let done: Vec<&TrialResult> = trials.iter().filter_map(TrialStatus::result).collect();
    let sizes: Vec<f64> = done.iter().map(|t| t.tree_size as f64).collect();
    let rewards: Vec<f64> = done.iter().filter_map(|t| t.reward()).collect();
    Aggregate {
        size: Stat::of(&sizes),
        reward: Stat::of(&rewards),
        failed: trials.len() - done.len(),
        unsuccessful: done.iter().filter(|t| !t.successful).count(),
    }
}

/// Runs every seed's trial (in parallel), aggregates, and writes outputs if
/// an output directory is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let trials: Vec<TrialStatus> = config
        .seeds
        .par_iter()
        .map(|&seed| match run_trial(config, seed) {
            Ok(r) => TrialStatus::Completed(Box::new(r)),
            Err(e) => TrialStatus::Failed {
                seed,
                reason: e.to_string(),
            },
        })
        .collect();
    let result = ExperimentResult {
        aggregate: aggregate(&trials),
        trials,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, config, &result)?;
    }
    Ok(result)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SUMMARY_HEADER: &str = "trial,seed,status,tree_size,avg_reward,episodes,successful";

pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for (i, t) in result.trials.iter().enumerate() {
        let _ = match t {
            TrialStatus::Completed(r) => writeln!(
                out,
                "{i},{},completed,{},{},{},{}",
                r.seed,
                r.tree_size,
                fmt_opt(r.reward()),
                r.evaluation.episodes,
                u8::from(r.successful)
            ),
            TrialStatus::Failed { seed, .. } => writeln!(out, "{i},{seed},failed,,,,"),
        };
    }
    out
}

pub fn aggregate_csv(agg: &Aggregate) -> String {
    let mut out = String::from("metric,mean,stddev,n\n");
    for (name, stat) in [("tree_size", agg.size), ("avg_reward", agg.reward)] {
        let _ = match stat {
            Some(s) => writeln!(out, "{name},{},{},{}", s.mean, s.stddev, s.n),
            None => writeln!(out, "{name},,,0"),
        };
    }
    let _ = writeln!(out, "failed_trials,{},,", agg.failed);
    let _ = writeln!(out, "unsuccessful_trials,{},,", agg.unsuccessful);
    out
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("size,reward\n");
    for p in curve {
        let _ = writeln!(out, "{},{}", p.size, fmt_opt(p.reward));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn trial_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("trial_{index:02}"))
}

/// Writes `summary.csv`, `aggregate.csv` and, per trial, `metrics.csv`,
/// `tree_final.txt`, `tree_final.dot` and `curve.csv`.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, result: &ExperimentResult) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("summary.csv"), &summary_csv(result))?;
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(&result.aggregate))?;
    for (i, status) in result.trials.iter().enumerate() {
        let tdir = trial_dir(dir, i);
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        match status {
            TrialStatus::Completed(r) => {
                if config.write_metrics {
                    let path = tdir.join("metrics.csv");
                    let file = fs::File::create(&path).map_err(io_err(&path))?;
                    r.metrics
                        .write_csv(io::BufWriter::new(file))
                        .map_err(io_err(&path))?;
                }
                write_file(&tdir.join("tree_final.txt"), &export_tree(&r.tree, ExportFormat::Text))?;
                write_file(&tdir.join("tree_final.dot"), &export_tree(&r.tree, ExportFormat::Dot))?;
                if config.record_curve {
                    write_file(&tdir.join("curve.csv"), &curve_csv(&r.curve))?;
                }
            }
            TrialStatus::Failed { seed, reason } => {
                write_file(&tdir.join("failure.txt"), &format!("seed {seed}: {reason}\n"))?;
            }
        }
    }
    Ok(())
}

/// A grid of parameter values crossed over a base configuration.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: RawConfig,
    pub grid: Vec<(String, Vec<toml::Value>)>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub values: Vec<toml::Value>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub parameters: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.parameters {
            out.push_str(p);
            out.push(',');
        }
        out.push_str("trials,failed,mean_size,std_size,mean_reward,std_reward\n");
        for row in &self.rows {
            for v in &row.values {
                let _ = write!(out, "{v},");
            }
            let a = &row.aggregate;
            let n = a.size.map_or(0, |s| s.n) + a.failed;
            let _ = writeln!(
                out,
                "{n},{},{},{},{},{}",
                a.failed,
                fmt_opt(a.size.map(|s| s.mean)),
                fmt_opt(a.size.map(|s| s.stddev)),
                fmt_opt(a.reward.map(|s| s.mean)),
                fmt_opt(a.reward.map(|s| s.stddev))
            );
        }
        out
    }
}

impl SweepSpec {
    /// Every combination of grid values, first parameter varying slowest.
    pub fn points(&self) -> Vec<Vec<toml::Value>> {
        let mut points = vec![Vec::new()];
        for (_, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect();
        }
        if self.grid.is_empty() || self.grid.iter().any(|(_, v)| v.is_empty()) {
            return Vec::new();
        }
        points
    }

    /// Resolved experiment for one grid point.
    pub fn point_config(&self, values: &[toml::Value]) -> Result<ExperimentConfig, ConfigError> {
        let mut raw = self.base.clone();
        for ((key, _), value) in self.grid.iter().zip(values) {
            raw.set(key, value.clone(), crate::config::Source::Sweep)?;
        }
        raw.resolve()
    }

    /// Rough number of environment steps the sweep will take.
    pub fn estimated_steps(&self) -> Result<u128, ConfigError> {
        let base = self.base.resolve()?;
        let per_trial = u128::from(base.train_steps) + u128::from(base.eval_steps);
        Ok(self.points().len() as u128 * base.seeds.len() as u128 * per_trial)
    }
}

/// Runs one experiment per grid point. Refuses up front if the estimated
/// step count exceeds `harness.max_total_steps`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable, HarnessError> {
    let parameters: Vec<String> = spec.grid.iter().map(|(k, _)| k.clone()).collect();
    let points = spec.points();
    if points.is_empty() {
        return Ok(SweepTable {
            parameters,
            rows: Vec::new(),
        });
    }
    for (key, _) in &spec.grid {
        crate::config::lookup_key(key)?;
    }
    let base = spec.base.resolve()?;
    let estimate = spec.estimated_steps()?;
    let cap = spec.base.max_total_steps()?;
    if estimate > cap {
        return Err(HarnessError::BudgetExceeded { estimate, cap });
    }
    let configs: Vec<ExperimentConfig> = points
        .iter()
        .enumerate()
        .map(|(i, values)| {
            let mut cfg = spec.point_config(values)?;
            cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(format!("point_{i:03}")));
            Ok(cfg)
        })
        .collect::<Result<_, ConfigError>>()?;
    let results: Vec<ExperimentResult> = configs.par_iter().map(run_experiment).collect::<Result<_, _>>()?;
    let table = SweepTable {
        parameters,
        rows: points
            .into_iter()
            .zip(&results)
            .map(|(values, r)| SweepRow {
                values,
                aggregate: r.aggregate,
            })
            .collect(),
    };
    if let Some(dir) = &base.output_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_file(&dir.join("sweep.csv"), &table.to_csv())?;
    }
    Ok(table)
}
