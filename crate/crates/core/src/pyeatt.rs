//! Baseline tree learner driven by the history of Q-value changes.
//!
//! Each leaf records the change every Bellman update made to its Q-values,
//! together with the state that caused it. Once a leaf has accumulated
//! `hist_min` records, it is split as soon as the changes stop looking like a
//! single converging distribution: when their mean is small relative to
//! their spread (`|mean| < 2 * stddev`). The cut is the candidate that best
//! separates the mean change on either side.
//!
//! The split test and the cut selection are reconstructions; only the
//! qualitative behaviour (history-triggered splitting, large trees) is
//! intended to match the original method.

use rand::Rng;

use crate::cqi::{bellman, bootstrap_value, take_action};
use crate::env::Environment;
use crate::learner::{check_gamma, check_unit_open, Checkpoint, TrainError, TrainOptions, TrainOutcome, Trainer};
use crate::metrics::{MetricsLog, StepRecord};
use crate::schedule::EpsilonSchedule;
use crate::tree::{PolicyTree, Region, SplitSide};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyeattParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Records a leaf needs before it may split.
    pub hist_min: usize,
    /// Candidate thresholds per dimension considered when cutting.
    pub num_splits: usize,
    pub q_init: f64,
    pub epsilon: EpsilonSchedule,
}

impl Default for PyeattParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            gamma: 0.8,
            hist_min: 5000,
            num_splits: 3,
            q_init: 0.0,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl PyeattParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        check_unit_open("alpha", self.alpha, true)?;
        check_gamma(self.gamma)?;
        if self.hist_min < 2 {
            return Err(TrainError::InvalidParam {
                name: "hist_min",
                reason: format!("{} must be at least 2", self.hist_min),
            });
        }
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

/// Q-value changes recorded at one leaf, with the states that caused them
/// and running moments of the changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeltaHistory {
    dimension: usize,
    states: Vec<f64>,
    deltas: Vec<f64>,
    mean: f64,
    m2: f64,
}

impl DeltaHistory {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            ..Self::default()
        }
    }

    pub fn push(&mut self, state: &[f64], delta: f64) {
        debug_assert_eq!(state.len(), self.dimension);
        self.states.extend_from_slice(state);
        self.deltas.push(delta);
        let n = self.deltas.len() as f64;
        let d = delta - self.mean;
        self.mean += d / n;
        self.m2 += d * (delta - self.mean);
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.deltas.clear();
        self.mean = 0.0;
        self.m2 = 0.0;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation.
    pub fn stddev(&self) -> f64 {
        if self.deltas.is_empty() {
            0.0
        } else {
            (self.m2 / self.deltas.len() as f64).max(0.0).sqrt()
        }
    }

    pub fn records(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.states.chunks_exact(self.dimension.max(1)).zip(self.deltas.iter().copied())
    }
}

/// Split once the history is long enough and its mean change is within two
/// standard deviations of zero.
pub fn pyeatt_should_split(history: &DeltaHistory, hist_min: usize) -> bool {
    history.len() >= hist_min && history.mean().abs() < 2.0 * history.stddev()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub dimension: usize,
    pub threshold: f64,
}

/// Picks the candidate cut whose two sides have the most different mean
/// change. Lower dimension, then lower threshold, wins ties. If every
/// candidate leaves a side empty, the most evenly occupied one is used.
/// `None` only when the region has no candidates at all.
pub fn pyeatt_choose_split(history: &DeltaHistory, region: &Region, num_splits: usize) -> Option<Cut> {
    let candidates = region.candidate_thresholds(num_splits);
    let mut best: Option<(Cut, f64)> = None;
    let mut fallback: Option<(Cut, usize)> = None;
    for &(dimension, threshold) in &candidates {
        let (mut n_l, mut s_l, mut n_r, mut s_r) = (0usize, 0.0, 0usize, 0.0);
        for (state, delta) in history.records() {
            if state[dimension] < threshold {
                n_l += 1;
                s_l += delta;
            } else {
                n_r += 1;
                s_r += delta;
            }
        }
        let cut = Cut { dimension, threshold };
        if n_l > 0 && n_r > 0 {
            let gap = (s_l / n_l as f64 - s_r / n_r as f64).abs();
            if best.is_none_or(|(_, g)| gap > g) {
                best = Some((cut, gap));
            }
        } else {
            let imbalance = n_l.abs_diff(n_r);
            if fallback.is_none_or(|(_, i)| imbalance < i) {
                fallback = Some((cut, imbalance));
            }
        }
    }
    best.map(|(c, _)| c).or(fallback.map(|(c, _)| c))
}

pub struct PyeattTrainer<E, R> {
    env: E,
    rng: R,
    params: PyeattParams,
    options: TrainOptions,
    tree: PolicyTree,
    histories: Vec<DeltaHistory>,
    state: Vec<f64>,
    step: u64,
    episode: u64,
    metrics: MetricsLog,
    checkpoints: Vec<Checkpoint>,
}

impl<E: Environment, R: Rng> PyeattTrainer<E, R> {
    pub fn new(mut env: E, params: PyeattParams, mut rng: R, options: TrainOptions) -> Result<Self, TrainError> {
        params.validate()?;
        let space = env.feature_space().clone();
        let dimension = space.dimension();
        let tree = PolicyTree::new(space, env.action_names().to_vec(), params.q_init, 0);
        let state = env.reset(&mut rng)?;
        Ok(Self {
            env,
            rng,
            params,
            options,
            tree,
            histories: vec![DeltaHistory::new(dimension)],
            state,
            step: 0,
            episode: 0,
            metrics: MetricsLog::default(),
            checkpoints: Vec::new(),
        })
    }

    /// History of the node `id`; empty for branches.
    pub fn history(&self, id: crate::tree::NodeId) -> &DeltaHistory {
        &self.histories[id.0]
    }
}

impl<E: Environment, R: Rng> Trainer for PyeattTrainer<E, R> {
    fn step(&mut self) -> Result<StepRecord, TrainError> {
        let params = self.params;
        let epsilon = params.epsilon.at(self.step);
        let leaf = self.tree.traverse(&self.state)?;
        let action = take_action(&self.tree.leaf(leaf)?.q, epsilon, &mut self.rng);
        let transition = self.env.step(action, &mut self.rng)?;
        if !transition.reward.is_finite() {
            return Err(TrainError::NonFiniteReward(transition.reward));
        }
        let next_leaf = self.tree.traverse(&transition.next_state)?;
        let next_value = bootstrap_value(&self.tree.leaf(next_leaf)?.q, transition.terminal);

        let q = &mut self.tree.leaf_mut(leaf)?.q[action.0];
        let old = *q;
        *q = bellman(old, params.alpha, params.gamma, transition.reward, next_value);
        let delta = *q - old;
        self.histories[leaf.0].push(&transition.state, delta);

        let mut split = false;
        if pyeatt_should_split(&self.histories[leaf.0], params.hist_min) {
            let region = self.tree.region(leaf);
            match pyeatt_choose_split(&self.histories[leaf.0], &region, params.num_splits) {
                Some(cut) => {
                    if self.options.record_checkpoints {
                        self.checkpoints.push(Checkpoint {
                            step: self.step,
                            tree: self.tree.clone(),
                        });
                    }
                    let parent_q = self.tree.leaf(leaf)?.q.clone();
                    let side = SplitSide {
                        q: parent_q,
                        visits: 0.5,
                    };
                    self.tree.split_with(leaf, cut.dimension, cut.threshold, side.clone(), side)?;
                    let dimension = self.tree.space().dimension();
                    self.histories[leaf.0] = DeltaHistory::new(dimension);
                    self.histories.resize_with(self.tree.size(), || DeltaHistory::new(dimension));
                    split = true;
                }
                // region too small to cut: start a fresh history
                None => self.histories[leaf.0].clear(),
            }
        }

        let record = StepRecord {
            step: self.step,
            episode: self.episode,
            reward: transition.reward,
            tree_size: self.tree.size(),
            h_s: None,
            best_split_value: None,
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
        Ok(record)
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

pub fn train_pyeatt<E: Environment, R: Rng>(
    env: E,
    params: PyeattParams,
    budget: u64,
    rng: R,
) -> Result<TrainOutcome, TrainError> {
    if budget == 0 {
        return Err(TrainError::EmptyBudget);
    }
    crate::learner::run(PyeattTrainer::new(env, params, rng, TrainOptions::default())?, budget)
}
