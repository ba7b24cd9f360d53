#![allow(dead_code)]

use cqi::config::RawConfig;
use cqi::harness::{run_experiment, ExperimentConfig, ExperimentResult};
use cqi::tree::{FeatureSpace, NodeId, NodeKind, PolicyTree, Region};
use rand::Rng;

pub fn space(dims: usize) -> FeatureSpace {
    let names = (0..dims).map(|i| format!("x{i}")).collect();
    let bounds = (0..dims).map(|i| (-(i as f64) - 1.0, 2.0 * i as f64 + 3.0)).collect();
    FeatureSpace::new(names, bounds).unwrap()
}

pub fn actions(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

/// Grows a tree by `splits` random ledger splits, then scrambles every
/// visit frequency, Q-value and shadow statistic.
pub fn random_tree<R: Rng>(rng: &mut R, dims: usize, n_actions: usize, num_splits: usize, splits: usize) -> PolicyTree {
    let mut tree = PolicyTree::new(space(dims), actions(n_actions), 0.0, num_splits);
    for _ in 0..splits {
        let leaves: Vec<NodeId> = tree.leaf_ids().filter(|&id| !tree.leaf(id).unwrap().splits.is_empty()).collect();
        if leaves.is_empty() {
            break;
        }
        let id = leaves[rng.random_range(0..leaves.len())];
        let ledger = &tree.leaf(id).unwrap().splits;
        let chosen = ledger[rng.random_range(0..ledger.len())].clone();
        tree.split_node(id, &chosen).unwrap();
    }
    let ids: Vec<NodeId> = tree.nodes().map(|(id, _)| id).collect();
    for id in ids {
        tree.node_mut(id).visits = rng.random::<f64>();
        if let NodeKind::Leaf(leaf) = &mut tree.node_mut(id).kind {
            for q in &mut leaf.q {
                *q = rng.random_range(-10.0..10.0);
            }
            for s in &mut leaf.splits {
                for side in [&mut s.left, &mut s.right] {
                    side.visits = rng.random::<f64>();
                    for q in &mut side.q {
                        *q = rng.random_range(-10.0..10.0);
                    }
                }
            }
        }
    }
    tree
}

/// Uniform state inside `region`; with probability 0.2 one coordinate is
/// snapped to a branch threshold of `tree` to exercise equality routing.
pub fn random_state<R: Rng>(rng: &mut R, tree: &PolicyTree, region: &Region) -> Vec<f64> {
    let mut s: Vec<f64> = (0..region.dimension())
        .map(|m| {
            let (lo, hi) = (region.lower[m], region.upper[m]);
            if hi > lo { rng.random_range(lo..=hi) } else { lo }
        })
        .collect();
    if rng.random::<f64>() < 0.2 {
        let cuts: Vec<(usize, f64)> = tree
            .nodes()
            .filter_map(|(_, n)| match n.kind {
                NodeKind::Branch { dimension, threshold, .. } => Some((dimension, threshold)),
                NodeKind::Leaf(_) => None,
            })
            .collect();
        if !cuts.is_empty() {
            let (m, u) = cuts[rng.random_range(0..cuts.len())];
            s[m] = u;
        }
    }
    s
}

/// Leaves whose region contains `state`, found by scanning every leaf.
pub fn leaves_containing(tree: &PolicyTree, state: &[f64]) -> Vec<NodeId> {
    tree.leaf_ids()
        .filter(|&id| tree.region(id).contains(state, tree.space()))
        .collect()
}

/// Structural invariants: every branch has two distinct children that point
/// back to it, every node other than the root is reached exactly once, and
/// leaves outnumber branches by one.
pub fn check_full_binary(tree: &PolicyTree) -> Result<(), String> {
    let mut seen = vec![0usize; tree.size()];
    let mut branches = 0;
    for (id, node) in tree.nodes() {
        if let NodeKind::Branch { left, right, .. } = node.kind {
            branches += 1;
            if left == right {
                return Err(format!("{id:?} has identical children"));
            }
            for child in [left, right] {
                if child.0 >= tree.size() {
                    return Err(format!("{id:?} points at missing {child:?}"));
                }
                if tree.node(child).parent != Some(id) {
                    return Err(format!("{child:?} does not point back at {id:?}"));
                }
                seen[child.0] += 1;
            }
        }
    }
    if seen[tree.root().0] != 0 {
        return Err("root is somebody's child".into());
    }
    for (i, &count) in seen.iter().enumerate() {
        if i != tree.root().0 && count != 1 {
            return Err(format!("node {i} has {count} parents"));
        }
    }
    if tree.leaf_count() != branches + 1 {
        return Err(format!("{} leaves for {branches} branches", tree.leaf_count()));
    }
    Ok(())
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Default configuration with `key=value` overrides applied.
pub fn experiment(overrides: &[&str]) -> ExperimentConfig {
    let mut raw = RawConfig::defaults();
    for o in overrides {
        raw.apply_override(o).unwrap_or_else(|e| panic!("{o}: {e}"));
    }
    let mut exp = raw.resolve().unwrap();
    exp.output_dir = None;
    exp.record_curve = false;
    exp.write_metrics = false;
    exp
}

pub fn run(overrides: &[&str]) -> ExperimentResult {
    run_experiment(&experiment(overrides)).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}
