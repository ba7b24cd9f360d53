mod common;

use cqi::env::{Environment, RobotNav, RobotNavConfig};
use cqi::export::{export_tree, parse_text, ExportFormat, Policy};
use cqi::harness::{eval_rng, evaluate_policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_state, random_tree};

#[test]
fn text_round_trip_preserves_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tree = random_tree(&mut rng, 3, 4, 3, 10);
    assert_eq!(tree.size(), 21);
    let text = export_tree(&tree, ExportFormat::Text);
    let view = parse_text(&text, tree.action_names(), &tree.space().names).unwrap();
    assert_eq!(view.size(), 21);
    assert_eq!(view.to_text(), text);
    let region = tree.space().full_region();
    for _ in 0..1000 {
        let s = random_state(&mut rng, &tree, &region);
        assert_eq!(Policy::act(&view, &s), Policy::act(&tree, &s), "state {s:?}");
    }
}

#[test]
fn dot_has_one_vertex_per_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let tree = random_tree(&mut rng, 2, 3, 2, 6);
    let dot = export_tree(&tree, ExportFormat::Dot);
    assert!(dot.starts_with("digraph"));
    let vertices = dot.lines().filter(|l| l.contains("shape=")).count();
    assert_eq!(vertices, tree.size());
    assert_eq!(dot.matches("->").count(), tree.size() - 1);
}

#[test]
fn hand_built_sidestep_tree_reaches_the_goal() {
    let env = RobotNav::new(RobotNavConfig::default()).unwrap();
    let text = include_str!("fixtures/sidestep.txt");
    let view = parse_text(text, env.action_names(), &env.feature_space().names).unwrap();
    assert_eq!(view.size(), 7);
    let mut env = env;
    let e = evaluate_policy(&view, &mut env, 50_000, &mut eval_rng(0)).unwrap();
    let avg = e.average().unwrap();
    assert!((-40.0..=-10.0).contains(&avg), "average reward {avg}");
}
