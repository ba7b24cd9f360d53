//! Decision-tree policy representation.
//!
//! A [`PolicyTree`] is a full binary tree stored in an arena. Branch nodes
//! route a state left when `state[dimension] < threshold` and right otherwise
//! (equality goes right). Leaf nodes are abstract states: they hold one
//! Q-value per action and a ledger of candidate [`Split`]s whose shadow
//! statistics estimate what each would-be child would look like.
//!
//! The tree only ever grows, and only by replacing a leaf with a branch and
//! two fresh leaves, so the node count is always odd.

use std::fmt;

use thiserror::Error;

/// Index of one discrete action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arena index of a node inside a [`PolicyTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("state has {got} features but the tree expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("node {0:?} is not a leaf")]
    NotALeaf(NodeId),
    #[error("node {0:?} does not exist")]
    UnknownNode(NodeId),
    #[error("split (dimension {dimension}, threshold {threshold}) is not in the leaf's ledger")]
    SplitNotInLedger { dimension: usize, threshold: f64 },
    #[error("threshold {threshold} is not strictly inside the leaf region along dimension {dimension}")]
    ThresholdOutsideRegion { dimension: usize, threshold: f64 },
    #[error("expected {expected} Q-values, got {got}")]
    ActionCountMismatch { expected: usize, got: usize },
    #[error("invalid feature space: {0}")]
    InvalidFeatureSpace(String),
}

/// Names and closed bounds of every state feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
}

impl FeatureSpace {
    pub fn new(names: Vec<String>, bounds: Vec<(f64, f64)>) -> Result<Self, TreeError> {
        if names.len() != bounds.len() {
            return Err(TreeError::InvalidFeatureSpace(format!(
                "{} names for {} bounds",
                names.len(),
                bounds.len()
            )));
        }
        for (name, &(lo, hi)) in names.iter().zip(&bounds) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(TreeError::InvalidFeatureSpace(format!(
                    "feature {name} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { names, bounds })
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        state.len() == self.dimension()
            && state
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    pub fn full_region(&self) -> Region {
        Region {
            lower: self.bounds.iter().map(|b| b.0).collect(),
            upper: self.bounds.iter().map(|b| b.1).collect(),
        }
    }
}

/// Axis-aligned box of the feature space covered by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, dimension: usize) -> f64 {
        self.upper[dimension] - self.lower[dimension]
    }

    /// Membership under the traversal rule: half-open `[lower, upper)` except
    /// where `upper` is the feature space's own upper bound, which is closed.
    pub fn contains(&self, state: &[f64], space: &FeatureSpace) -> bool {
        state.iter().enumerate().all(|(m, &x)| {
            let below_upper = if self.upper[m] >= space.bounds[m].1 {
                x <= self.upper[m]
            } else {
                x < self.upper[m]
            };
            x >= self.lower[m] && below_upper
        })
    }

    /// Candidate split points: `num_splits` evenly spaced interior points per
    /// dimension at fractions `k / (num_splits + 1)` of the extent. Degenerate
    /// dimensions contribute nothing.
    pub fn candidate_thresholds(&self, num_splits: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(num_splits * self.dimension());
        for m in 0..self.dimension() {
            let (lo, hi) = (self.lower[m], self.upper[m]);
            if !(hi > lo) {
                continue;
            }
            for k in 1..=num_splits {
                let u = lo + (hi - lo) * (k as f64) / ((num_splits + 1) as f64);
                if u > lo && u < hi {
                    out.push((m, u));
                }
            }
        }
        out
    }
}

/// Shadow statistics for one would-be child of a candidate split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSide {
    pub q: Vec<f64>,
    pub visits: f64,
}

/// A hypothetical cut of a leaf along `dimension` at `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub dimension: usize,
    pub threshold: f64,
    pub left: SplitSide,
    pub right: SplitSide,
}

impl Split {
    /// Whether `state` falls on the left side of this cut.
    #[inline]
    pub fn goes_left(&self, state: &[f64]) -> bool {
        state[self.dimension] < self.threshold
    }
}

/// Initial visit share of each side of a freshly created candidate split.
pub const INITIAL_SIDE_VISITS: f64 = 0.5;

/// Builds a leaf's candidate ledger. Every side starts from a copy of
/// `inherited_q` and a visit share of one half.
pub fn init_split_ledger(region: &Region, num_splits: usize, inherited_q: &[f64]) -> Vec<Split> {
    region
        .candidate_thresholds(num_splits)
        .into_iter()
        .map(|(dimension, threshold)| Split {
            dimension,
            threshold,
            left: SplitSide {
                q: inherited_q.to_vec(),
                visits: INITIAL_SIDE_VISITS,
            },
            right: SplitSide {
                q: inherited_q.to_vec(),
                visits: INITIAL_SIDE_VISITS,
            },
        })
        .collect()
}

/// Argmax over Q-values, lowest index wins ties.
pub fn best_action(q: &[f64]) -> ActionId {
    let mut best = 0;
    for (a, &value) in q.iter().enumerate().skip(1) {
        if value > q[best] {
            best = a;
        }
    }
    ActionId(best)
}

pub fn max_q(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub q: Vec<f64>,
    pub splits: Vec<Split>,
}

impl Leaf {
    pub fn best_action(&self) -> ActionId {
        best_action(&self.q)
    }

    pub fn max_q(&self) -> f64 {
        max_q(&self.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Branch {
        dimension: usize,
        threshold: f64,
        left: NodeId,
        right: NodeId,
    },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Exponentially averaged frequency of lying on the traversal path,
    /// relative to the parent.
    pub visits: f64,
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    pub fn as_leaf(&self) -> Option<&Leaf> {
        match &self.kind {
            NodeKind::Leaf(leaf) => Some(leaf),
            NodeKind::Branch { .. } => None,
        }
    }
}

/// A decision-tree policy over a bounded feature space with discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTree {
    nodes: Vec<Node>,
    space: FeatureSpace,
    action_names: Vec<String>,
    num_splits: usize,
}

impl PolicyTree {
    /// A single-leaf tree: root visit frequency 1, every Q-value `q_init`,
    /// and a ledger of `num_splits` candidates per dimension (zero disables
    /// the ledger).
    pub fn new(space: FeatureSpace, action_names: Vec<String>, q_init: f64, num_splits: usize) -> Self {
        let q = vec![q_init; action_names.len()];
        let splits = init_split_ledger(&space.full_region(), num_splits, &q);
        Self {
            nodes: vec![Node {
                visits: 1.0,
                parent: None,
                kind: NodeKind::Leaf(Leaf { q, splits }),
            }],
            space,
            action_names,
            num_splits,
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn action_count(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_splits(&self) -> usize {
        self.num_splits
    }

    /// Total node count, branches plus leaves.
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.len().div_ceil(2)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|(_, n)| n.is_leaf()).map(|(id, _)| id)
    }

    pub fn leaf(&self, id: NodeId) -> Result<&Leaf, TreeError> {
        self.nodes
            .get(id.0)
            .ok_or(TreeError::UnknownNode(id))?
            .as_leaf()
            .ok_or(TreeError::NotALeaf(id))
    }

    pub fn leaf_mut(&mut self, id: NodeId) -> Result<&mut Leaf, TreeError> {
        match &mut self.nodes.get_mut(id.0).ok_or(TreeError::UnknownNode(id))?.kind {
            NodeKind::Leaf(leaf) => Ok(leaf),
            NodeKind::Branch { .. } => Err(TreeError::NotALeaf(id)),
        }
    }

    /// The leaf whose region contains `state`.
    pub fn traverse(&self, state: &[f64]) -> Result<NodeId, TreeError> {
        if state.len() != self.space.dimension() {
            return Err(TreeError::DimensionMismatch {
                expected: self.space.dimension(),
                got: state.len(),
            });
        }
        let mut id = self.root();
        loop {
            match &self.nodes[id.0].kind {
                NodeKind::Leaf(_) => return Ok(id),
                NodeKind::Branch {
                    dimension,
                    threshold,
                    left,
                    right,
                } => {
                    id = if state[*dimension] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Greedy action of the leaf reached by `state`.
    pub fn act(&self, state: &[f64]) -> Result<ActionId, TreeError> {
        let leaf = self.traverse(state)?;
        Ok(self.leaf(leaf)?.best_action())
    }

    /// Nodes from the root down to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(parent) = self.nodes[cur.0].parent {
            path.push(parent);
            cur = parent;
        }
        path.reverse();
        path
    }

    /// The other child of `id`'s parent, if `id` is not the root.
    pub fn sibling(&self, id: NodeId) -> Option<NodeId> {
        let parent = self.nodes[id.0].parent?;
        match self.nodes[parent.0].kind {
            NodeKind::Branch { left, right, .. } => Some(if left == id { right } else { left }),
            NodeKind::Leaf(_) => None,
        }
    }

    /// Product of visit frequencies along the root-to-`id` path, inclusive.
    pub fn path_visit_product(&self, id: NodeId) -> f64 {
        let mut product = self.nodes[id.0].visits;
        let mut cur = id;
        while let Some(parent) = self.nodes[cur.0].parent {
            product *= self.nodes[parent.0].visits;
            cur = parent;
        }
        product
    }

    /// Feature box covered by node `id`: the feature bounds intersected with
    /// every ancestor branch condition.
    pub fn region(&self, id: NodeId) -> Region {
        let mut region = self.space.full_region();
        let mut cur = id;
        while let Some(parent) = self.nodes[cur.0].parent {
            if let NodeKind::Branch {
                dimension,
                threshold,
                left,
                ..
            } = self.nodes[parent.0].kind
            {
                if left == cur {
                    region.upper[dimension] = region.upper[dimension].min(threshold);
                } else {
                    region.lower[dimension] = region.lower[dimension].max(threshold);
                }
            }
            cur = parent;
        }
        region
    }

    /// Depth of the deepest leaf; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        self.leaf_ids().map(|id| self.path_to(id).len() - 1).max().unwrap_or(0)
    }

    /// Replaces leaf `id` with a branch on the ledger entry `chosen`. The
    /// children take their Q-values and visit shares from the split's sides.
    pub fn split_node(&mut self, id: NodeId, chosen: &Split) -> Result<(NodeId, NodeId), TreeError> {
        let leaf = self.leaf(id)?;
        let found = leaf
            .splits
            .iter()
            .any(|s| s.dimension == chosen.dimension && s.threshold == chosen.threshold);
        if !found {
            return Err(TreeError::SplitNotInLedger {
                dimension: chosen.dimension,
                threshold: chosen.threshold,
            });
        }
        self.split_with(id, chosen.dimension, chosen.threshold, chosen.left.clone(), chosen.right.clone())
    }

    /// Replaces leaf `id` with a branch at `(dimension, threshold)` and two
    /// leaves initialised from `left` and `right`. The branch keeps the
    /// leaf's visit frequency. Returns the new child ids.
    pub fn split_with(
        &mut self,
        id: NodeId,
        dimension: usize,
        threshold: f64,
        left: SplitSide,
        right: SplitSide,
    ) -> Result<(NodeId, NodeId), TreeError> {
        self.leaf(id)?;
        let n_actions = self.action_count();
        for side in [&left, &right] {
            if side.q.len() != n_actions {
                return Err(TreeError::ActionCountMismatch {
                    expected: n_actions,
                    got: side.q.len(),
                });
            }
        }
        let region = self.region(id);
        if dimension >= region.dimension()
            || !(threshold > region.lower[dimension] && threshold < region.upper[dimension])
        {
            return Err(TreeError::ThresholdOutsideRegion { dimension, threshold });
        }

        let left_id = NodeId(self.nodes.len());
        let right_id = NodeId(self.nodes.len() + 1);
        let mut left_region = region.clone();
        left_region.upper[dimension] = threshold;
        let mut right_region = region;
        right_region.lower[dimension] = threshold;

        let new_leaf = |side: SplitSide, region: &Region, num_splits: usize| Node {
            visits: side.visits,
            parent: Some(id),
            kind: NodeKind::Leaf(Leaf {
                splits: init_split_ledger(region, num_splits, &side.q),
                q: side.q,
            }),
        };
        let left_node = new_leaf(left, &left_region, self.num_splits);
        let right_node = new_leaf(right, &right_region, self.num_splits);
        self.nodes.push(left_node);
        self.nodes.push(right_node);
        self.nodes[id.0].kind = NodeKind::Branch {
            dimension,
            threshold,
            left: left_id,
            right: right_id,
        };
        Ok((left_id, right_id))
    }

    /// Copy of the tree with every candidate ledger dropped. Acting and
    /// exporting are unaffected.
    pub fn without_ledgers(&self) -> PolicyTree {
        let mut out = self.clone();
        for node in &mut out.nodes {
            if let NodeKind::Leaf(leaf) = &mut node.kind {
                leaf.splits = Vec::new();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space2() -> FeatureSpace {
        FeatureSpace::new(vec!["a".into(), "b".into()], vec![(0.0, 8.0), (0.0, 4.0)]).unwrap()
    }

    fn actions(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn single_leaf_tree_routes_everything_to_root() {
        let tree = PolicyTree::new(space2(), actions(3), 0.0, 2);
        for s in [[0.0, 0.0], [8.0, 4.0], [3.3, 1.1]] {
            assert_eq!(tree.traverse(&s).unwrap(), tree.root());
        }
        assert_eq!(tree.size(), 1);
        assert_eq!(tree.node(tree.root()).visits, 1.0);
    }

    #[test]
    fn equality_goes_right() {
        let space = FeatureSpace::new(vec!["x".into(), "y".into()], vec![(0.0, 10.0), (0.0, 10.0)]).unwrap();
        let mut tree = PolicyTree::new(space, actions(2), 0.0, 1);
        let side = SplitSide { q: vec![0.0; 2], visits: 0.5 };
        let (l, r) = tree.split_with(tree.root(), 0, 5.0, side.clone(), side).unwrap();
        assert_eq!(tree.traverse(&[5.0, 1.0]).unwrap(), r);
        assert_eq!(tree.traverse(&[4.999, 1.0]).unwrap(), l);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let tree = PolicyTree::new(space2(), actions(2), 0.0, 1);
        assert_eq!(
            tree.traverse(&[1.0]),
            Err(TreeError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn best_action_breaks_ties_low() {
        assert_eq!(best_action(&[-1.0, 3.5, 0.0]), ActionId(1));
        assert_eq!(best_action(&[2.0, 2.0]), ActionId(0));
        assert_eq!(best_action(&[0.0; 4]), ActionId(0));
    }

    #[test]
    fn ledger_midpoints() {
        let region = space2().full_region();
        let ledger = init_split_ledger(&region, 1, &[0.0, 0.0]);
        let cuts: Vec<_> = ledger.iter().map(|s| (s.dimension, s.threshold)).collect();
        assert_eq!(cuts, vec![(0, 4.0), (1, 2.0)]);
        assert!(ledger.iter().all(|s| s.left.visits == 0.5 && s.right.visits == 0.5));
    }

    #[test]
    fn ledger_quarter_points_in_one_dimension() {
        let region = Region { lower: vec![0.0], upper: vec![10.0] };
        let cuts: Vec<f64> = init_split_ledger(&region, 4, &[1.0])
            .iter()
            .map(|s| s.threshold)
            .collect();
        assert_eq!(cuts, vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn degenerate_dimension_has_no_candidates() {
        let region = Region { lower: vec![0.0, 3.0], upper: vec![8.0, 3.0] };
        let ledger = init_split_ledger(&region, 3, &[0.0]);
        assert_eq!(ledger.len(), 3);
        assert!(ledger.iter().all(|s| s.dimension == 0));
        let empty = Region { lower: vec![1.0], upper: vec![1.0] };
        assert!(init_split_ledger(&empty, 3, &[0.0]).is_empty());
    }

    #[test]
    fn split_node_copies_shadow_statistics() {
        let mut tree = PolicyTree::new(space2(), actions(2), 0.0, 3);
        tree.node_mut(tree.root()).visits = 0.8;
        let mut chosen = tree.leaf(tree.root()).unwrap().splits[4].clone();
        assert_eq!(chosen.dimension, 1);
        assert_eq!(chosen.threshold, 2.0);
        chosen.left = SplitSide { q: vec![1.0, -1.0], visits: 0.3 };
        chosen.right = SplitSide { q: vec![-2.0, 2.0], visits: 0.5 };
        tree.leaf_mut(tree.root()).unwrap().splits[4] = chosen.clone();

        let (l, r) = tree.split_node(tree.root(), &chosen).unwrap();
        assert_eq!(tree.size(), 3);
        assert_eq!(tree.node(tree.root()).visits, 0.8);
        match tree.node(tree.root()).kind {
            NodeKind::Branch { dimension, threshold, .. } => {
                assert_eq!((dimension, threshold), (1, 2.0));
            }
            _ => panic!("root should be a branch"),
        }
        assert_eq!(tree.node(l).visits, 0.3);
        assert_eq!(tree.node(r).visits, 0.5);
        assert_eq!(tree.leaf(l).unwrap().q, vec![1.0, -1.0]);
        assert_eq!(tree.leaf(r).unwrap().q, vec![-2.0, 2.0]);

        // children ledgers cover their own regions: left is [0,8]x[0,2]
        let left_cuts: Vec<_> = tree.leaf(l).unwrap().splits.iter().map(|s| (s.dimension, s.threshold)).collect();
        assert_eq!(left_cuts, vec![(0, 2.0), (0, 4.0), (0, 6.0), (1, 0.5), (1, 1.0), (1, 1.5)]);
        assert!(tree.leaf(l).unwrap().splits.iter().all(|s| s.left.q == vec![1.0, -1.0]));
    }

    #[test]
    fn split_not_in_ledger_is_rejected() {
        let mut tree = PolicyTree::new(space2(), actions(2), 0.0, 1);
        let mut bogus = tree.leaf(tree.root()).unwrap().splits[0].clone();
        bogus.threshold = 1.234;
        assert!(matches!(
            tree.split_node(tree.root(), &bogus),
            Err(TreeError::SplitNotInLedger { .. })
        ));
        assert_eq!(tree.size(), 1);
    }

    #[test]
    fn splitting_a_branch_fails() {
        let mut tree = PolicyTree::new(space2(), actions(2), 0.0, 1);
        let s = tree.leaf(tree.root()).unwrap().splits[0].clone();
        tree.split_node(tree.root(), &s).unwrap();
        assert_eq!(tree.split_node(tree.root(), &s), Err(TreeError::NotALeaf(tree.root())));
    }

    #[test]
    fn regions_follow_branch_conditions() {
        let mut tree = PolicyTree::new(space2(), actions(2), 0.0, 1);
        let side = SplitSide { q: vec![0.0; 2], visits: 0.5 };
        let (l, r) = tree.split_with(tree.root(), 0, 4.0, side.clone(), side.clone()).unwrap();
        let (rl, rr) = tree.split_with(r, 1, 1.0, side.clone(), side).unwrap();
        assert_eq!(tree.region(l), Region { lower: vec![0.0, 0.0], upper: vec![4.0, 4.0] });
        assert_eq!(tree.region(rl), Region { lower: vec![4.0, 0.0], upper: vec![8.0, 1.0] });
        assert_eq!(tree.region(rr), Region { lower: vec![4.0, 1.0], upper: vec![8.0, 4.0] });
        assert_eq!(tree.path_to(rr), vec![tree.root(), r, rr]);
        assert_eq!(tree.sibling(rl), Some(rr));
        assert_eq!(tree.sibling(tree.root()), None);
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.leaf_count(), 3);
    }

    #[test]
    fn split_outside_region_is_rejected() {
        let mut tree = PolicyTree::new(space2(), actions(2), 0.0, 1);
        let side = SplitSide { q: vec![0.0; 2], visits: 0.5 };
        let (l, _) = tree.split_with(tree.root(), 0, 4.0, side.clone(), side.clone()).unwrap();
        assert!(matches!(
            tree.split_with(l, 0, 6.0, side.clone(), side),
            Err(TreeError::ThresholdOutsideRegion { .. })
        ));
    }
}
