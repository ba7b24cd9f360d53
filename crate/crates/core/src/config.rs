//! Experiment configuration files.
//!
//! Configs are TOML with four sections, `[method]`, `[exploration]`,
//! `[env]` and `[harness]`, plus an optional `[sweep]` table mapping full key
//! names to lists of values. Every key has a default; values are layered
//! default < environment < file < command-line override, and the resolved
//! snapshot records where each value came from.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::Value;

use crate::cqi::CqiParams;
use crate::env::{parse_map, Feature, Rect, RobotNavConfig, StartRule};
use crate::harness::{ExperimentConfig, Method};
use crate::learner::TrainError;
use crate::pyeatt::PyeattParams;
use crate::schedule::EpsilonSchedule;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "CQI_OUTPUT_ROOT";

pub struct ConfigKey {
    pub name: &'static str,
    /// Default as a TOML literal.
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> ConfigKey {
    ConfigKey { name, default, help }
}

pub const KEYS: &[ConfigKey] = &[
    key("method.name", "\"cqi\"", "learner: cqi or pyeatt"),
    key("method.alpha", "0.01", "learning rate, in (0, 1]"),
    key("method.gamma", "0.8", "discount factor, in [0, 1)"),
    key("method.split_thresh_max", "10.0", "cqi: split threshold after init and after every split"),
    key("method.split_thresh_decay", "0.9999", "cqi: per-step split threshold decay, in (0, 1]"),
    key("method.visit_decay", "0.999", "cqi: visit frequency decay, in (0, 1)"),
    key("method.num_splits", "3", "candidate thresholds per dimension"),
    key("method.q_init", "0.0", "initial Q-value of the root leaf"),
    key("method.shadow_base", "\"leaf\"", "cqi: old value of the shadow update, leaf or side"),
    key("method.hist_min", "5000", "pyeatt: Q-change records needed before a split"),
    key("exploration.epsilon_start", "1.0", "epsilon at step 0"),
    key("exploration.epsilon_end", "0.05", "epsilon floor"),
    key("exploration.epsilon_decay_steps", "20000", "steps of linear epsilon decay"),
    key("env.map_file", "\"\"", "optional text map (.#SG); overrides arena, goal, start and obstacles"),
    key("env.width", "20.0", "arena width"),
    key("env.height", "20.0", "arena height"),
    key("env.goal_x", "16.0", "goal centre x"),
    key("env.goal_y", "10.0", "goal centre y"),
    key("env.goal_radius", "1.0", "goal radius"),
    key("env.obstacles", "[[8.0, 6.5, 9.0, 13.5], [12.0, 1.5, 13.0, 7.0]]", "obstacle rectangles as [x0, y0, x1, y1]"),
    key("env.start_rule", "\"uniform_random_free\"", "fixed or uniform_random_free"),
    key("env.start_x", "3.0", "fixed start x"),
    key("env.start_y", "10.0", "fixed start y"),
    key("env.step_size", "1.0", "distance moved per action"),
    key("env.max_episode_steps", "200", "episode step limit"),
    key("env.action_set", "\"goal_relative\"", "goal_relative or cardinal"),
    key("env.step_reward", "-1.0", "reward every step"),
    key("env.collision_penalty", "-4.0", "added when a move is blocked"),
    key("env.goal_reward", "0.0", "added on reaching the goal"),
    key(
        "env.features",
        "[\"goal_distance\", \"obstacle_angle\", \"obstacle_distance\", \"x\", \"y\"]",
        "observation features, from goal_distance obstacle_angle obstacle_distance x y goal_dx goal_dy goal_clearance",
    ),
    key("env.sensor_range", "5.0", "obstacle distance is clamped to this"),
    key("harness.train_steps", "100000", "training steps per trial"),
    key("harness.eval_steps", "10000", "greedy evaluation steps per trial"),
    key("harness.trials", "10", "number of trials"),
    key("harness.seed", "0", "seed of the first trial; trial i uses seed + i"),
    key("harness.output_dir", "\"runs\"", "output directory"),
    key("harness.record_curve", "true", "evaluate every pre-split checkpoint"),
    key("harness.write_metrics", "true", "write per-step metrics.csv"),
    key("harness.failure_reward", "-50.0", "trials at or below this reward are flagged unsuccessful"),
    key("harness.max_total_steps", "2000000000", "sweep budget cap in environment steps"),
];

pub fn lookup_key(name: &str) -> Result<&'static ConfigKey, ConfigError> {
    KEYS.iter()
        .find(|k| k.name == name)
        .ok_or_else(|| ConfigError::UnknownKey(name.to_string()))
}

/// Every key with its default, followed by a description.
pub fn keys_help() -> String {
    let mut out = String::new();
    for k in KEYS {
        let _ = writeln!(out, "  {} = {}\n        {}", k.name, k.default, k.help);
    }
    out
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot parse {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("malformed override `{0}`, expected key=value")]
    MalformedOverride(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    Environment,
    File,
    Override,
    Sweep,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::Environment => "environment",
            Source::File => "file",
            Source::Override => "override",
            Source::Sweep => "sweep",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: Value,
    source: Source,
}

fn parse_literal(text: &str) -> Option<Value> {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
}

/// Coerces `value` to the type of `template`, so `10` works for a float key
/// and `1e5` for an integer key.
fn coerce(key: &str, template: &Value, value: Value) -> Result<Value, ConfigError> {
    match (template, value) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Integer(_), Value::Float(f)) if f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(Value::Integer(f as i64)),
        (t, v) if std::mem::discriminant(t) == std::mem::discriminant(&v) => Ok(v),
        (t, v) => Err(invalid(key, format!("expected {}, got {}", t.type_str(), v.type_str()))),
    }
}

/// Layered key/value configuration before it is turned into an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, Entry>,
    base_dir: Option<PathBuf>,
    pub sweep: Vec<(String, Vec<Value>)>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        let values = KEYS
            .iter()
            .map(|k| {
                let value = parse_literal(k.default).expect("built-in defaults are valid TOML");
                (
                    k.name,
                    Entry {
                        value,
                        source: Source::Default,
                    },
                )
            })
            .collect();
        Self {
            values,
            base_dir: None,
            sweep: Vec::new(),
        }
    }

    /// Defaults plus the output root from [`OUTPUT_ROOT_VAR`], if set.
    pub fn from_environment() -> Self {
        let mut cfg = Self::defaults();
        if let Ok(root) = std::env::var(OUTPUT_ROOT_VAR) {
            if !root.is_empty() {
                cfg.set("harness.output_dir", Value::String(root), Source::Environment)
                    .expect("output_dir is a string key");
            }
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_environment();
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.merge_str(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Layers the TOML document `text` over the current values.
    pub fn merge_str(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        for (section, body) in table {
            let Value::Table(body) = body else {
                return Err(ConfigError::UnknownKey(section));
            };
            if section == "sweep" {
                for (name, values) in body {
                    lookup_key(&name)?;
                    let Value::Array(values) = values else {
                        return Err(invalid(&format!("sweep.{name}"), "expected a list of values"));
                    };
                    self.sweep.push((name, values));
                }
                continue;
            }
            for (k, v) in body {
                self.set(&format!("{section}.{k}"), v, Source::File)?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, name: &str, value: Value, source: Source) -> Result<(), ConfigError> {
        let key = lookup_key(name)?;
        let entry = self.values.get_mut(key.name).expect("every key has a default");
        entry.value = coerce(name, &entry.value, value)?;
        entry.source = source;
        Ok(())
    }

    /// Applies a `key=value` override. Values are read as TOML literals and
    /// fall back to a bare string.
    pub fn apply_override(&mut self, text: &str) -> Result<(), ConfigError> {
        let (name, raw) = text
            .split_once('=')
            .ok_or_else(|| ConfigError::MalformedOverride(text.to_string()))?;
        let (name, raw) = (name.trim(), raw.trim());
        let value = parse_literal(raw).unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(name, value, Source::Override)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name).map(|e| &e.value)
    }

    pub fn source(&self, name: &str) -> Option<Source> {
        self.values.get(name).map(|e| e.source)
    }

    fn value(&self, name: &str) -> &Value {
        self.get(name).unwrap_or_else(|| panic!("no config key {name}"))
    }

    fn f64(&self, name: &str) -> Result<f64, ConfigError> {
        match self.value(name) {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            v => Err(invalid(name, format!("expected a number, got {}", v.type_str()))),
        }
    }

    fn u64(&self, name: &str) -> Result<u64, ConfigError> {
        match self.value(name) {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            v => Err(invalid(name, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn str(&self, name: &str) -> Result<&str, ConfigError> {
        self.value(name)
            .as_str()
            .ok_or_else(|| invalid(name, "expected a string"))
    }

    fn bool(&self, name: &str) -> Result<bool, ConfigError> {
        self.value(name)
            .as_bool()
            .ok_or_else(|| invalid(name, "expected true or false"))
    }

    pub fn max_total_steps(&self) -> Result<u128, ConfigError> {
        self.u64("harness.max_total_steps").map(u128::from)
    }

    fn epsilon(&self) -> Result<EpsilonSchedule, ConfigError> {
        let schedule = EpsilonSchedule {
            start: self.f64("exploration.epsilon_start")?,
            end: self.f64("exploration.epsilon_end")?,
            decay_steps: self.u64("exploration.epsilon_decay_steps")?,
        };
        for (k, v) in [("exploration.epsilon_start", schedule.start), ("exploration.epsilon_end", schedule.end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(k, format!("{v} is outside [0, 1]")));
            }
        }
        if schedule.decay_steps < 1 {
            return Err(invalid("exploration.epsilon_decay_steps", "must be at least 1"));
        }
        Ok(schedule)
    }

    fn method(&self) -> Result<Method, ConfigError> {
        let epsilon = self.epsilon()?;
        let num_splits = self.u64("method.num_splits")? as usize;
        let method = match self.str("method.name")? {
            "cqi" => {
                let p = CqiParams {
                    alpha: self.f64("method.alpha")?,
                    gamma: self.f64("method.gamma")?,
                    split_threshold_max: self.f64("method.split_thresh_max")?,
                    split_threshold_decay: self.f64("method.split_thresh_decay")?,
                    visit_decay: self.f64("method.visit_decay")?,
                    num_splits,
                    q_init: self.f64("method.q_init")?,
                    epsilon,
                    shadow_base: self
                        .str("method.shadow_base")?
                        .parse()
                        .map_err(|e: String| invalid("method.shadow_base", e))?,
                };
                p.validate().map_err(param_error)?;
                Method::Cqi(p)
            }
            "pyeatt" => {
                let p = PyeattParams {
                    alpha: self.f64("method.alpha")?,
                    gamma: self.f64("method.gamma")?,
                    hist_min: self.u64("method.hist_min")? as usize,
                    num_splits,
                    q_init: self.f64("method.q_init")?,
                    epsilon,
                };
                p.validate().map_err(param_error)?;
                Method::Pyeatt(p)
            }
            other => return Err(invalid("method.name", format!("unknown method `{other}`"))),
        };
        Ok(method)
    }

    fn resolve_path(&self, p: &str) -> PathBuf {
        let path = PathBuf::from(p);
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path,
        }
    }

    pub fn env(&self) -> Result<RobotNavConfig, ConfigError> {
        let parse_enum = |name: &str| -> Result<String, ConfigError> { Ok(self.str(name)?.to_string()) };
        let obstacles = match self.value("env.obstacles") {
            Value::Array(items) => items
                .iter()
                .map(|item| {
                    let nums: Option<Vec<f64>> = item.as_array().map(|a| {
                        a.iter()
                            .filter_map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                            .collect()
                    });
                    match nums.as_deref() {
                        Some(&[x0, y0, x1, y1]) => Ok(Rect::new(x0, y0, x1, y1)),
                        _ => Err(invalid("env.obstacles", "each obstacle must be [x0, y0, x1, y1]")),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err(invalid("env.obstacles", "expected a list")),
        };
        let features = match self.value("env.features") {
            Value::Array(items) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .ok_or_else(|| invalid("env.features", "expected feature names"))
                        .and_then(|s| s.parse::<Feature>().map_err(|e| invalid("env.features", e)))
                })
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err(invalid("env.features", "expected a list")),
        };
        let mut cfg = RobotNavConfig {
            width: self.f64("env.width")?,
            height: self.f64("env.height")?,
            goal: (self.f64("env.goal_x")?, self.f64("env.goal_y")?),
            goal_radius: self.f64("env.goal_radius")?,
            obstacles,
            step_size: self.f64("env.step_size")?,
            max_episode_steps: self.u64("env.max_episode_steps")? as usize,
            action_set: parse_enum("env.action_set")?
                .parse()
                .map_err(|e: String| invalid("env.action_set", e))?,
            step_reward: self.f64("env.step_reward")?,
            collision_penalty: self.f64("env.collision_penalty")?,
            goal_reward: self.f64("env.goal_reward")?,
            start_rule: parse_enum("env.start_rule")?
                .parse()
                .map_err(|e: String| invalid("env.start_rule", e))?,
            start: (self.f64("env.start_x")?, self.f64("env.start_y")?),
            features,
            sensor_range: self.f64("env.sensor_range")?,
        };
        let map_file = self.str("env.map_file")?;
        if !map_file.is_empty() {
            let path = self.resolve_path(map_file);
            let text = fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
            let layout = parse_map(&text).map_err(|e| invalid("env.map_file", e.to_string()))?;
            cfg.width = layout.width;
            cfg.height = layout.height;
            cfg.goal = layout.goal;
            cfg.obstacles = layout.obstacles;
            if let Some(start) = layout.start {
                cfg.start = start;
                cfg.start_rule = StartRule::Fixed;
            }
        }
        cfg.validate().map_err(|e| invalid("env", e.to_string()))?;
        Ok(cfg)
    }

    /// Builds and validates the experiment described by these values.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let trials = self.u64("harness.trials")?;
        if trials < 1 {
            return Err(invalid("harness.trials", "must be at least 1"));
        }
        let seed = self.u64("harness.seed")?;
        let train_steps = self.u64("harness.train_steps")?;
        let eval_steps = self.u64("harness.eval_steps")?;
        if train_steps < 1 {
            return Err(invalid("harness.train_steps", "must be at least 1"));
        }
        if eval_steps < 1 {
            return Err(invalid("harness.eval_steps", "must be at least 1"));
        }
        let output_dir = self.str("harness.output_dir")?;
        Ok(ExperimentConfig {
            method: self.method()?,
            env: self.env()?,
            train_steps,
            eval_steps,
            seeds: (0..trials).map(|i| seed.wrapping_add(i)).collect(),
            output_dir: (!output_dir.is_empty()).then(|| PathBuf::from(output_dir)),
            record_curve: self.bool("harness.record_curve")?,
            write_metrics: self.bool("harness.write_metrics")?,
            failure_reward: self.f64("harness.failure_reward")?,
        })
    }

    /// TOML rendering of every value with its source as a trailing comment.
    /// Loading a snapshot reproduces the same experiment.
    pub fn snapshot(&self) -> String {
        let mut out = String::from("# resolved configuration; precedence: default < environment < file < override < sweep\n");
        let mut section = "";
        for k in KEYS {
            let (sec, name) = k.name.split_once('.').expect("keys are section.name");
            if sec != section {
                let _ = write!(out, "\n[{sec}]\n");
                section = sec;
            }
            let entry = &self.values[k.name];
            let value = match (k.name, &entry.value) {
                ("env.map_file", Value::String(s)) if !s.is_empty() => {
                    Value::String(self.resolve_path(s).display().to_string())
                }
                (_, v) => v.clone(),
            };
            let _ = writeln!(out, "{name} = {value}  # {}", entry.source);
        }
        if !self.sweep.is_empty() {
            out.push_str("\n[sweep]\n");
            for (name, values) in &self.sweep {
                let _ = writeln!(out, "\"{name}\" = {}", Value::Array(values.clone()));
            }
        }
        out
    }
}

fn param_error(e: TrainError) -> ConfigError {
    match e {
        TrainError::InvalidParam { name: "epsilon", reason } => invalid("exploration.epsilon_*", reason),
        TrainError::InvalidParam { name, reason } => invalid(&format!("method.{name}"), reason),
        other => invalid("method", other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let exp = RawConfig::defaults().resolve().unwrap();
        assert_eq!(exp.train_steps, 100_000);
        assert_eq!(exp.eval_steps, 10_000);
        assert_eq!(exp.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(exp.method, Method::Cqi(CqiParams {
            epsilon: EpsilonSchedule { decay_steps: 20_000, ..EpsilonSchedule::default() },
            ..CqiParams::reward_optimized()
        }));
        assert_eq!(exp.env, RobotNavConfig::default());
    }

    #[test]
    fn file_and_override_layers() {
        let mut cfg = RawConfig::defaults();
        cfg.merge_str("[method]\nname = \"pyeatt\"\nalpha = 0.3\nhist_min = 5000\n[harness]\nseed = 7\ntrials = 2\n", "test")
            .unwrap();
        cfg.apply_override("method.alpha=0.5").unwrap();
        assert_eq!(cfg.source("method.alpha"), Some(Source::Override));
        assert_eq!(cfg.source("method.hist_min"), Some(Source::File));
        assert_eq!(cfg.source("method.gamma"), Some(Source::Default));
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.seeds, vec![7, 8]);
        match exp.method {
            Method::Pyeatt(p) => {
                assert_eq!(p.alpha, 0.5);
                assert_eq!(p.hist_min, 5000);
            }
            _ => panic!("expected pyeatt"),
        }
    }

    #[test]
    fn integer_and_float_coercion() {
        let mut cfg = RawConfig::defaults();
        cfg.apply_override("method.split_thresh_max=10000000").unwrap();
        cfg.apply_override("harness.train_steps=5e5").unwrap();
        assert_eq!(cfg.get("method.split_thresh_max"), Some(&Value::Float(1e7)));
        assert_eq!(cfg.get("harness.train_steps"), Some(&Value::Integer(500_000)));
        assert!(cfg.apply_override("harness.train_steps=1.5").is_err());
    }

    #[test]
    fn bare_string_override() {
        let mut cfg = RawConfig::defaults();
        cfg.apply_override("method.name=pyeatt").unwrap();
        assert_eq!(cfg.get("method.name"), Some(&Value::String("pyeatt".into())));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RawConfig::defaults();
        assert!(matches!(cfg.apply_override("method.beta=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.apply_override("nonsense"), Err(ConfigError::MalformedOverride(_))));
        assert!(matches!(cfg.merge_str("[method]\nfoo = 1\n", "t"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.merge_str("alpha = 1\n", "t"), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn out_of_range_values_name_their_key() {
        let mut cfg = RawConfig::defaults();
        cfg.apply_override("method.alpha=1.5").unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("method.alpha"), "{err}");

        let mut cfg = RawConfig::defaults();
        cfg.apply_override("exploration.epsilon_end=2").unwrap();
        assert!(cfg.resolve().unwrap_err().to_string().contains("exploration.epsilon_end"));

        let mut cfg = RawConfig::defaults();
        cfg.apply_override("env.features=[\"bogus\"]").unwrap();
        assert!(cfg.resolve().unwrap_err().to_string().contains("env.features"));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RawConfig::defaults();
        cfg.apply_override("method.num_splits=7").unwrap();
        cfg.merge_str("[sweep]\n\"method.alpha\" = [0.1, 0.2]\n", "t").unwrap();
        let snap = cfg.snapshot();
        assert!(snap.contains("num_splits = 7  # override"));
        let mut again = RawConfig::defaults();
        again.merge_str(&snap, "snapshot").unwrap();
        assert_eq!(again.resolve().unwrap(), cfg.resolve().unwrap());
        assert_eq!(again.sweep, cfg.sweep);
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        for k in KEYS {
            assert!(help.contains(k.name));
        }
    }
}
