mod common;

use proptest::prelude::*;
use sigmaforest::dataset::{generate, FeatureMatrix, GeneratorConfig, TargetKind};
use sigmaforest::forest::ForestHyperparams;

const QUERIES: [f64; 6] = [-3.0, -0.25, 0.0, 0.4, 1.7, 12.0];

fn xy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rotation_is_an_isometry(y in -1e3f64..1e3, s in 0.0f64..1e3, theta in 0.0f64..=90.0) {
        common::check_rotation_isometry(y, s, theta).unwrap();
    }

    #[test]
    fn power_of_two_scaling_is_exact((x, y) in xy(), e in -4i32..6, leaf in 1usize..4, seed in 0u64..1000) {
        let hp = ForestHyperparams::new(8, leaf, seed);
        common::check_scale_equivariance(&FeatureMatrix::single(x), &y, &hp, 2f64.powi(e), &QUERIES).unwrap();
    }

    #[test]
    fn shifting_targets_keeps_structure((x, y) in xy(), shift in -50.0f64..50.0, seed in 0u64..1000) {
        let hp = ForestHyperparams::new(8, 2, seed);
        common::check_shift_equivariance(&FeatureMatrix::single(x), &y, &hp, shift, &QUERIES).unwrap();
    }

    #[test]
    fn monotone_feature_maps_keep_fitted_predictions(
        (x, y, w) in xy().prop_flat_map(|(x, y)| {
            let n = x.len();
            (Just(x), Just(y), prop::collection::vec(0u32..3, n))
        }),
        leaf in 1usize..4,
    ) {
        common::check_monotone_feature_invariance(&x, &y, &w, leaf).unwrap();
    }

    #[test]
    fn ensemble_mean_is_mean_of_trees((x, y) in xy(), n_trees in 1usize..20, seed in 0u64..1000) {
        let hp = ForestHyperparams::new(n_trees, 1, seed);
        common::check_mean_of_trees(&FeatureMatrix::single(x), &y, &hp, &QUERIES).unwrap();
    }

    #[test]
    fn kfold_is_a_balanced_partition(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        common::check_kfold_partition(n, k, seed).unwrap();
    }

    #[test]
    fn blocking_split_depends_only_on_order(x in prop::collection::vec(-1e3f64..1e3, 3..200)) {
        common::check_blocking_determinism(&x).unwrap();
    }

    #[test]
    fn csv_round_trip_is_identity(periods in 1usize..4, ppp in 5usize..40, seed in 0u64..1000) {
        let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2SigmaEncoded, periods as f64, ppp, seed)).unwrap();
        common::check_csv_round_trip(&d).unwrap();
    }

    #[test]
    fn x_only_pipeline_is_a_plain_forest(ppp in 10usize..60, leaf in 1usize..6, seed in 0u64..1000) {
        let d = generate(&GeneratorConfig::periodic(TargetKind::Cos2Mediated, 1.0, ppp, seed)).unwrap();
        common::check_x_only_equivalence(&d, &ForestHyperparams::new(10, leaf, seed), &QUERIES).unwrap();
    }
}
