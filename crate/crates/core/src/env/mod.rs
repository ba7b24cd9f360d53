//! Episodic environments with a bounded real-valued feature space and a
//! discrete action set.

mod map;
mod robotnav;

pub use map::{parse_map, MapError, MapLayout};
pub use robotnav::{
    ActionSet, Feature, Rect, RobotNav, RobotNavConfig, StartRule, GOAL_RELATIVE_ACTIONS, CARDINAL_ACTIONS,
};

use rand::Rng;
use thiserror::Error;

use crate::tree::{ActionId, FeatureSpace};

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Episode over, either at the goal or out of steps.
    pub done: bool,
    /// Episode over because a terminal state was reached. Learners only
    /// cut off bootstrapping on terminal transitions, not on timeouts.
    pub terminal: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid action {action} (environment has {count} actions)")]
    InvalidAction { action: usize, count: usize },
    #[error("step called on a finished episode; call reset first")]
    EpisodeOver,
    #[error("configuration error: {0}")]
    Config(String),
}

pub trait Environment {
    fn feature_space(&self) -> &FeatureSpace;

    fn action_names(&self) -> &[String];

    fn action_count(&self) -> usize {
        self.action_names().len()
    }

    /// Starts a new episode and returns the first observation.
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>, EnvError>;

    fn step<R: Rng + ?Sized>(&mut self, action: ActionId, rng: &mut R) -> Result<Transition, EnvError>;
}
