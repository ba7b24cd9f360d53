//! Pieces shared by the tree learners.

use thiserror::Error;

use crate::env::EnvError;
use crate::metrics::{MetricsLog, StepRecord};
use crate::tree::{PolicyTree, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("step budget must be at least 1")]
    EmptyBudget,
}

/// The policy as it stood immediately before the split taken at `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub tree: PolicyTree,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tree: PolicyTree,
    pub metrics: MetricsLog,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub record_metrics: bool,
    pub record_checkpoints: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            record_metrics: true,
            record_checkpoints: true,
        }
    }
}

/// A step-at-a-time learner. Each call to [`Trainer::step`] performs exactly
/// one environment interaction.
pub trait Trainer {
    fn step(&mut self) -> Result<StepRecord, TrainError>;

    fn tree(&self) -> &PolicyTree;

    fn steps_taken(&self) -> u64;

    fn finish(self) -> TrainOutcome;
}

/// Drives `trainer` for `budget` steps.
pub fn run<T: Trainer>(mut trainer: T, budget: u64) -> Result<TrainOutcome, TrainError> {
    if budget == 0 {
        return Err(TrainError::EmptyBudget);
    }
    for _ in 0..budget {
        trainer.step()?;
    }
    Ok(trainer.finish())
}

pub(crate) fn check_unit_open(name: &'static str, v: f64, allow_one: bool) -> Result<(), TrainError> {
    let ok = v > 0.0 && (v < 1.0 || (allow_one && v == 1.0));
    if ok {
        Ok(())
    } else {
        let range = if allow_one { "(0, 1]" } else { "(0, 1)" };
        Err(TrainError::InvalidParam {
            name,
            reason: format!("{v} is outside {range}"),
        })
    }
}

pub(crate) fn check_gamma(v: f64) -> Result<(), TrainError> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(TrainError::InvalidParam {
            name: "gamma",
            reason: format!("{v} is outside [0, 1)"),
        })
    }
}
