mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sigmaforest::tree::{fit_tree, TreeHyperparams};

#[test]
fn greedy_splits_match_exhaustive_enumeration() {
    common::greedy_optimality_suite(200, 2024).unwrap();
}

#[test]
fn oracle_flags_a_suboptimal_split() {
    // Two clusters split at 1.5 is optimal; a tree forced to split at 0.5
    // must be rejected by the oracle.
    let inst = common::Instance {
        x: sigmaforest::dataset::FeatureMatrix::single(vec![0.0, 1.0, 2.0, 3.0]),
        y: vec![0.0, 0.0, 5.0, 5.0],
        min_samples_leaf: 1,
    };
    let good = fit_tree(&inst.x, &inst.y, &TreeHyperparams::new(1), None).unwrap();
    common::check_greedy_optimal(&good, &inst).unwrap();
    let bad = sigmaforest::tree::RegressionTree::from_preorder(
        &[
            sigmaforest::tree::FlatNode::Split { feature: 0, threshold: 0.5 },
            sigmaforest::tree::FlatNode::Leaf { value: 0.0, count: 1 },
            sigmaforest::tree::FlatNode::Leaf { value: 10.0 / 3.0, count: 3 },
        ],
        1,
    )
    .unwrap();
    assert!(common::check_greedy_optimal(&bad, &inst).is_err());
}

#[test]
fn random_instances_cover_ties_and_tiny_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut tiny, mut tied) = (0, 0);
    for _ in 0..200 {
        let inst = common::random_instance(&mut rng);
        if inst.x.n_rows() < 2 * inst.min_samples_leaf {
            tiny += 1;
        }
        let mut c = inst.x.column(0).to_vec();
        c.sort_by(f64::total_cmp);
        if c.windows(2).any(|w| w[0] == w[1]) {
            tied += 1;
        }
    }
    assert!(tiny > 0 && tied > 100, "tiny {tiny}, tied {tied}");
}
