//! Conservative Q-Improvement.
//!
//! Every step the learner updates the visited leaf's Q-values, the visit
//! frequencies along its path, and the shadow statistics of the leaf's
//! candidate splits. It then scores each candidate by the policy-wide gain it
//! would bring and splits only when the best gain beats a threshold `h_s`.
//! The threshold decays geometrically while nothing happens and jumps back
//! to its maximum after every split, so each new split has to earn its place.

use rand::Rng;

use crate::env::Environment;
use crate::learner::{check_gamma, check_unit_open, Checkpoint, TrainError, TrainOptions, TrainOutcome, Trainer};
use crate::metrics::{MetricsLog, StepRecord};
use crate::schedule::EpsilonSchedule;
use crate::tree::{best_action, max_q, ActionId, Leaf, NodeId, PolicyTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqiParams {
    /// Learning rate.
    pub alpha: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Split threshold right after initialisation and after every split.
    pub split_threshold_max: f64,
    /// Per-step decay of the split threshold while no split happens.
    pub split_threshold_decay: f64,
    /// Decay factor of the exponentially averaged visit frequencies.
    pub visit_decay: f64,
    /// Candidate thresholds per dimension in every leaf's ledger.
    pub num_splits: usize,
    pub q_init: f64,
    pub epsilon: EpsilonSchedule,
    pub shadow_base: ShadowBase,
}

/// Which old value the shadow Bellman update of a candidate side starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadowBase {
    /// The owning leaf's Q-value, so shadow values track the leaf.
    #[default]
    Leaf,
    /// The side's own previous shadow Q-value, so each side keeps an
    /// independent estimate.
    Side,
}

impl std::str::FromStr for ShadowBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leaf" => Ok(Self::Leaf),
            "side" => Ok(Self::Side),
            other => Err(format!("unknown shadow base `{other}` (expected leaf or side)")),
        }
    }
}

impl Default for CqiParams {
    fn default() -> Self {
        Self::reward_optimized()
    }
}

impl CqiParams {
    /// Settings that gave the best reward in the published grid search.
    pub fn reward_optimized() -> Self {
        Self {
            alpha: 0.01,
            gamma: 0.8,
            split_threshold_max: 10.0,
            split_threshold_decay: 0.9999,
            visit_decay: 0.999,
            num_splits: 3,
            q_init: 0.0,
            epsilon: EpsilonSchedule::default(),
            shadow_base: ShadowBase::Leaf,
        }
    }

    /// Settings that gave the smallest trees in the published grid search.
    pub fn size_optimized() -> Self {
        Self {
            alpha: 0.2,
            split_threshold_max: 1e7,
            num_splits: 7,
            ..Self::reward_optimized()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        check_unit_open("alpha", self.alpha, true)?;
        check_gamma(self.gamma)?;
        if !(self.split_threshold_max > 0.0) {
            return Err(TrainError::InvalidParam {
                name: "split_thresh_max",
                reason: format!("{} must be positive", self.split_threshold_max),
            });
        }
        check_unit_open("split_thresh_decay", self.split_threshold_decay, true)?;
        check_unit_open("visit_decay", self.visit_decay, false)?;
        if self.num_splits < 1 {
            return Err(TrainError::InvalidParam {
                name: "num_splits",
                reason: "must be at least 1".into(),
            });
        }
        if !self.q_init.is_finite() {
            return Err(TrainError::InvalidParam {
                name: "q_init",
                reason: "must be finite".into(),
            });
        }
        self.epsilon
            .validate()
            .map_err(|reason| TrainError::InvalidParam { name: "epsilon", reason })
    }
}

/// Epsilon-greedy choice over `q`.
pub fn take_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> ActionId {
    if rng.random::<f64>() < epsilon {
        ActionId(rng.random_range(0..q.len()))
    } else {
        best_action(q)
    }
}

/// `max_a' Q(s', a')`, or zero when `s'` is terminal.
pub fn bootstrap_value(next_q: &[f64], terminal: bool) -> f64 {
    if terminal {
        0.0
    } else {
        max_q(next_q)
    }
}

/// One exponential-average Bellman step.
#[inline]
pub fn bellman(old: f64, alpha: f64, gamma: f64, reward: f64, next_value: f64) -> f64 {
    (1.0 - alpha) * old + alpha * (reward + gamma * next_value)
}

/// Moves the leaf's Q-value for `action` toward `reward + gamma * next_value`.
pub fn update_leaf_q(
    leaf: &mut Leaf,
    action: ActionId,
    reward: f64,
    next_value: f64,
    params: &CqiParams,
) -> Result<(), TrainError> {
    if !reward.is_finite() {
        return Err(TrainError::NonFiniteReward(reward));
    }
    let q = &mut leaf.q[action.0];
    *q = bellman(*q, params.alpha, params.gamma, reward, next_value);
    Ok(())
}

/// Decays every visit frequency touched by a visit to `leaf`: nodes on the
/// path move toward 1, their siblings toward 0.
pub fn update_visit_frequency(tree: &mut PolicyTree, leaf: NodeId, decay: f64) {
    for id in tree.path_to(leaf) {
        let node = tree.node_mut(id);
        node.visits = node.visits * decay + (1.0 - decay);
        if let Some(sibling) = tree.sibling(id) {
            tree.node_mut(sibling).visits *= decay;
        }
    }
}

/// Updates the shadow statistics of every candidate split of `leaf` for a
/// visit at `state`. With [`ShadowBase::Leaf`] the visited side's Q for
/// `action` is recomputed from the leaf's own (already updated) Q-value;
/// with [`ShadowBase::Side`] it is a Bellman step from the side's own value.
/// The visited side's visit share moves toward 1 and the other side's
/// toward 0.
pub fn update_possible_splits(
    leaf: &mut Leaf,
    state: &[f64],
    action: ActionId,
    reward: f64,
    next_value: f64,
    params: &CqiParams,
) {
    let from_leaf = bellman(leaf.q[action.0], params.alpha, params.gamma, reward, next_value);
    let d = params.visit_decay;
    for split in &mut leaf.splits {
        let (side, other) = if split.goes_left(state) {
            (&mut split.left, &mut split.right)
        } else {
            (&mut split.right, &mut split.left)
        };
        side.q[action.0] = match params.shadow_base {
            ShadowBase::Leaf => from_leaf,
            ShadowBase::Side => bellman(side.q[action.0], params.alpha, params.gamma, reward, next_value),
        };
        side.visits = side.visits * d + (1.0 - d);
        other.visits *= d;
    }
}

/// Best candidate of a leaf and its estimated policy-wide gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEvaluation {
    /// Index into the leaf's ledger; `None` when the ledger is empty.
    pub index: Option<usize>,
    pub value: f64,
}

impl SplitEvaluation {
    pub const NONE: SplitEvaluation = SplitEvaluation {
        index: None,
        value: f64::NEG_INFINITY,
    };
}

/// Gain of one candidate: `vp * (c_l * left.v + c_r * right.v)` where `c_*`
/// is the side's best shadow Q minus the leaf's Q for the action taken.
#[inline]
pub fn split_value(split: &crate::tree::Split, leaf_q_taken: f64, path_visits: f64) -> f64 {
    let c_l = max_q(&split.left.q) - leaf_q_taken;
    let c_r = max_q(&split.right.q) - leaf_q_taken;
    path_visits * (c_l * split.left.visits + c_r * split.right.visits)
}

/// Scores every candidate of `leaf`; earliest ledger entry wins ties.
pub fn best_split(tree: &PolicyTree, leaf: NodeId, action: ActionId) -> SplitEvaluation {
    let Ok(node) = tree.leaf(leaf) else {
        return SplitEvaluation::NONE;
    };
    let path_visits = tree.path_visit_product(leaf);
    let taken = node.q[action.0];
    let mut best = SplitEvaluation::NONE;
    for (i, split) in node.splits.iter().enumerate() {
        let value = split_value(split, taken, path_visits);
        if best.index.is_none() || value > best.value {
            best = SplitEvaluation { index: Some(i), value };
        }
    }
    best
}

/// What happened during one CQI step, for callers that want to inspect the
/// learner as it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiStep {
    pub record: StepRecord,
    pub leaf: NodeId,
    pub action: ActionId,
    pub evaluation: SplitEvaluation,
}

pub struct CqiTrainer<E, R> {
    env: E,
    rng: R,
    params: CqiParams,
    options: TrainOptions,
    tree: PolicyTree,
    split_threshold: f64,
    state: Vec<f64>,
    step: u64,
    episode: u64,
    metrics: MetricsLog,
    checkpoints: Vec<Checkpoint>,
}

impl<E: Environment, R: Rng> CqiTrainer<E, R> {
    pub fn new(mut env: E, params: CqiParams, mut rng: R, options: TrainOptions) -> Result<Self, TrainError> {
        params.validate()?;
        let tree = PolicyTree::new(
            env.feature_space().clone(),
            env.action_names().to_vec(),
            params.q_init,
            params.num_splits,
        );
        let state = env.reset(&mut rng)?;
        Ok(Self {
            env,
            rng,
            params,
            options,
            tree,
            split_threshold: params.split_threshold_max,
            state,
            step: 0,
            episode: 0,
            metrics: MetricsLog::default(),
            checkpoints: Vec::new(),
        })
    }

    pub fn split_threshold(&self) -> f64 {
        self.split_threshold
    }

    pub fn params(&self) -> &CqiParams {
        &self.params
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    /// One step, returning details about the visited leaf and split decision.
    pub fn step_detailed(&mut self) -> Result<CqiStep, TrainError> {
        let params = self.params;
        let epsilon = params.epsilon.at(self.step);
        let leaf = self.tree.traverse(&self.state)?;
        let action = take_action(&self.tree.leaf(leaf)?.q, epsilon, &mut self.rng);
        let transition = self.env.step(action, &mut self.rng)?;
        let next_leaf = self.tree.traverse(&transition.next_state)?;
        let next_value = bootstrap_value(&self.tree.leaf(next_leaf)?.q, transition.terminal);

        update_leaf_q(self.tree.leaf_mut(leaf)?, action, transition.reward, next_value, &params)?;
        update_visit_frequency(&mut self.tree, leaf, params.visit_decay);
        update_possible_splits(
            self.tree.leaf_mut(leaf)?,
            &transition.state,
            action,
            transition.reward,
            next_value,
            &params,
        );
        let evaluation = best_split(&self.tree, leaf, action);

        let split = match evaluation.index {
            Some(index) if evaluation.value > self.split_threshold => {
                if self.options.record_checkpoints {
                    self.checkpoints.push(Checkpoint {
                        step: self.step,
                        tree: self.tree.without_ledgers(),
                    });
                }
                let chosen = self.tree.leaf(leaf)?.splits[index].clone();
                self.tree.split_node(leaf, &chosen)?;
                self.split_threshold = params.split_threshold_max;
                true
            }
            _ => {
                self.split_threshold = (self.split_threshold * params.split_threshold_decay).max(f64::MIN_POSITIVE);
                false
            }
        };

        let record = StepRecord {
            step: self.step,
            episode: self.episode,
            reward: transition.reward,
            tree_size: self.tree.size(),
            h_s: Some(self.split_threshold),
            best_split_value: Some(evaluation.value),
            split,
        };
        if self.options.record_metrics {
            self.metrics.push(record.clone());
        }

        self.step += 1;
        if transition.done {
            self.episode += 1;
            self.state = self.env.reset(&mut self.rng)?;
        } else {
            self.state = transition.next_state;
        }
        Ok(CqiStep {
            record,
            leaf,
            action,
            evaluation,
        })
    }
}

impl<E: Environment, R: Rng> Trainer for CqiTrainer<E, R> {
    fn step(&mut self) -> Result<StepRecord, TrainError> {
        self.step_detailed().map(|s| s.record)
    }

    fn tree(&self) -> &PolicyTree {
        &self.tree
    }

    fn steps_taken(&self) -> u64 {
        self.step
    }

    fn finish(self) -> TrainOutcome {
        TrainOutcome {
            tree: self.tree,
            metrics: self.metrics,
            checkpoints: self.checkpoints,
        }
    }
}

/// Trains a CQI policy for `budget` steps.
pub fn train_cqi<E: Environment, R: Rng>(
    env: E,
    params: CqiParams,
    budget: u64,
    rng: R,
) -> Result<TrainOutcome, TrainError> {
    if budget == 0 {
        return Err(TrainError::EmptyBudget);
    }
    crate::learner::run(CqiTrainer::new(env, params, rng, TrainOptions::default())?, budget)
}
