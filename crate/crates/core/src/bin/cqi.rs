use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use cqi::config::{keys_help, ConfigError, RawConfig, Source};
use cqi::env::{Environment, RobotNav};
use cqi::export::{parse_text, ExportFormat, PolicyView};
use cqi::harness::{self, eval_rng, evaluate_policy, run_experiment, run_sweep, SweepSpec};

const SNAPSHOT: &str = "config.snapshot";

#[derive(Parser)]
#[command(name = "cqi", version, about = "Train and inspect decision-tree policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (TOML)
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set method.alpha=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed of the first trial
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial and write the run directory
    Train(Common),
    /// Evaluate a saved text tree greedily
    Eval {
        tree: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a parameter grid
    Sweep {
        /// Grid axis as key=v1,v2,...; adds to the config's [sweep] table
        #[arg(long = "grid", value_name = "KEY=V1,V2,..")]
        grid: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Convert a saved text tree to text or DOT on stdout
    ExportTree {
        tree: PathBuf,
        #[arg(long, short, default_value = "text")]
        format: ExportFormat,
        #[command(flatten)]
        common: Common,
    },
    /// Check a config and print the resolved snapshot
    ValidateConfig {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(config: Option<&Path>, overrides: &[String]) -> Result<RawConfig, ConfigError> {
    let mut raw = match config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::from_environment(),
    };
    for o in overrides {
        raw.apply_override(o)?;
    }
    Ok(raw)
}

fn load_common(common: &Common) -> Result<RawConfig, ConfigError> {
    let mut raw = load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        raw.set("harness.seed", toml::Value::Integer(seed as i64), Source::Override)?;
    }
    if let Some(out) = &common.output {
        let out = toml::Value::String(out.display().to_string());
        raw.set("harness.output_dir", out, Source::Override)?;
    }
    Ok(raw)
}

/// Config for commands that read a saved tree: an explicit `--config`, or the
/// snapshot in the tree's run directory, or the defaults.
fn config_for_tree(tree: &Path, common: &Common) -> Result<RawConfig, ConfigError> {
    if common.config.is_some() {
        return load_common(common);
    }
    let found = tree
        .ancestors()
        .skip(1)
        .take(2)
        .map(|d| d.join(SNAPSHOT))
        .find(|p| p.is_file());
    let common = Common {
        config: found,
        ..common.clone()
    };
    load_common(&common)
}

fn read_tree(path: &Path, raw: &RawConfig) -> Result<PolicyView, Failure> {
    let env = RobotNav::new(raw.env()?).context("building environment")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let view = parse_text(&text, env.action_names(), &env.feature_space().names)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(view)
}

fn train(common: Common) -> Result<(), Failure> {
    let raw = load_common(&common)?;
    let mut exp = raw.resolve()?;
    let dir = match &exp.output_dir {
        Some(root) if common.output.is_some() => root.clone(),
        Some(root) => root.join(format!("{}-seed{}", exp.method.name(), exp.seeds[0])),
        None => return Err(Failure::Usage("harness.output_dir must not be empty for train".into())),
    };
    exp.output_dir = Some(dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let snapshot = dir.join(SNAPSHOT);
    fs::write(&snapshot, raw.snapshot()).with_context(|| format!("writing {}", snapshot.display()))?;
    let result = run_experiment(&exp).context("training")?;
    print!("{}", harness::aggregate_csv(&result.aggregate));
    println!("run directory: {}", dir.display());
    if result.aggregate.failed > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!("{} trial(s) failed", result.aggregate.failed)));
    }
    Ok(())
}

fn eval(tree: PathBuf, common: Common) -> Result<(), Failure> {
    let raw = config_for_tree(&tree, &common)?;
    let exp = raw.resolve()?;
    let view = read_tree(&tree, &raw)?;
    let mut env = RobotNav::new(exp.env.clone()).context("building environment")?;
    let e = evaluate_policy(&view, &mut env, exp.eval_steps, &mut eval_rng(exp.seeds[0])).context("evaluating")?;
    println!("size,episodes,avg_reward");
    let avg = e.average().map(|r| r.to_string()).unwrap_or_default();
    println!("{},{},{avg}", view.size(), e.episodes);
    Ok(())
}

fn parse_grid(spec: &str) -> Result<(String, Vec<toml::Value>), ConfigError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::MalformedOverride(spec.to_string()))?;
    let key = key.trim().to_string();
    cqi::config::lookup_key(&key)?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            toml::from_str::<toml::Table>(&format!("v = {v}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()))
        })
        .collect();
    Ok((key, values))
}

fn sweep(grid: Vec<String>, common: Common) -> Result<(), Failure> {
    let mut raw = load_common(&common)?;
    let mut axes = std::mem::take(&mut raw.sweep);
    for g in &grid {
        let (key, values) = parse_grid(g)?;
        axes.retain(|(k, _)| *k != key);
        axes.push((key, values));
    }
    raw.sweep = axes.clone();
    let spec = SweepSpec { base: raw, grid: axes };
    if let Some(dir) = spec.base.resolve()?.output_dir {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(SNAPSHOT), spec.base.snapshot()).context("writing snapshot")?;
    }
    let table = run_sweep(&spec).map_err(|e| match e {
        harness::HarnessError::Config(c) => Failure::Usage(c.to_string()),
        other => Failure::Runtime(other.into()),
    })?;
    print!("{}", table.to_csv());
    Ok(())
}

fn export(tree: PathBuf, format: ExportFormat, common: Common) -> Result<(), Failure> {
    let raw = config_for_tree(&tree, &common)?;
    let view = read_tree(&tree, &raw)?;
    print!("{}", view.render(format));
    Ok(())
}

fn validate(config: PathBuf, overrides: Vec<String>) -> Result<(), Failure> {
    let raw = load(Some(&config), &overrides)?;
    raw.resolve()?;
    print!("{}", raw.snapshot());
    Ok(())
}

fn main() -> ExitCode {
    let help = format!("Config keys (section.key = default):\n{}", keys_help());
    let matches = Cli::command().after_long_help(help.clone()).after_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Train(common) => train(common),
        Command::Eval { tree, common } => eval(tree, common),
        Command::Sweep { grid, common } => sweep(grid, common),
        Command::ExportTree { tree, format, common } => export(tree, format, common),
        Command::ValidateConfig { config, overrides } => validate(config, overrides),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
