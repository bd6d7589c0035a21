mod common;

use common::{empirical_frequency, quick_config, random_data, random_model};
use immsbm::baselines::{mmsbm_train, upper_limit, InputOutputPairs};
use immsbm::em::em_round;
use immsbm::eval::predictive_log_likelihood;
use immsbm::{train, TrainConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_is_monotone(
        n_in in 2usize..10, n_out in 2usize..6, t in 1usize..4, seed in any::<u64>(),
    ) {
        let (data, _) = random_data(n_in, n_out, 2, 2_000, seed);
        let (_, trace) = train(&data, &quick_config(t, seed)).unwrap();
        for r in &trace.restarts {
            prop_assert!(r.worst_relative_drop() <= 1e-9, "restart {} dropped {}", r.restart, r.worst_relative_drop());
        }
    }

    #[test]
    fn raw_p_update_stays_symmetric(
        n_in in 2usize..10, n_out in 2usize..6, t in 1usize..5, seed in any::<u64>(),
    ) {
        let (data, _) = random_data(n_in, n_out, 2, 1_000, seed);
        let start = random_model(n_in, n_out, t, seed ^ 7);
        let mut model = start;
        for _ in 0..3 {
            let round = em_round(&model, &data).unwrap();
            prop_assert!(round.p_drift <= 1e-9, "drift {}", round.p_drift);
            model = round.model;
        }
    }

    #[test]
    fn single_cluster_reproduces_empirical_frequency(
        n_in in 1usize..8, n_out in 1usize..6, seed in any::<u64>(),
    ) {
        let (data, _) = random_data(n_in, n_out, 3, 500, seed);
        let (model, _) = train(&data, &quick_config(1, seed)).unwrap();
        let freq = empirical_frequency(&data);
        for i in 0..n_in {
            for j in 0..n_in {
                let p = model.predict_pair(i, j).unwrap();
                for x in 0..n_out {
                    prop_assert!((p[x] - freq[x]).abs() <= 1e-9);
                }
            }
        }
        let (mm, _) = mmsbm_train(&InputOutputPairs::from_triplets(&data), &quick_config(1, seed)).unwrap();
        for i in 0..n_in {
            let p = mm.predict_input(i).unwrap();
            for x in 0..n_out {
                prop_assert!((p[x] - freq[x]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn upper_limit_dominates_trained_models(
        n_in in 2usize..8, n_out in 2usize..5, t in 1usize..4, seed in any::<u64>(),
    ) {
        let (data, _) = random_data(n_in, n_out, 2, 800, seed);
        let best = predictive_log_likelihood(&upper_limit(&data), &data).unwrap();
        prop_assert_eq!(best.skipped_weight, 0);
        let (model, _) = train(&data, &quick_config(t, seed)).unwrap();
        let ll = model.log_likelihood(&data).unwrap();
        prop_assert!(ll <= best.loglik + 1e-9 * best.loglik.abs().max(1.0));
        let other = random_model(n_in, n_out, t, seed);
        prop_assert!(other.log_likelihood(&data).unwrap() <= best.loglik + 1e-9);
    }
}

#[test]
fn converged_model_is_a_fixed_point() {
    let (data, _) = random_data(8, 4, 2, 20_000, 11);
    let config = TrainConfig {
        clusters: 2,
        restarts: 2,
        max_iters: 5_000,
        rel_tol: 1e-8,
        seed: 3,
        ..TrainConfig::default()
    };
    let (model, trace) = train(&data, &config).unwrap();
    assert!(trace.chosen().converged);
    let before = model.log_likelihood(&data).unwrap();
    let after = em_round(&model, &data)
        .unwrap()
        .model
        .log_likelihood(&data)
        .unwrap();
    assert!(((after - before) / before).abs() < config.rel_tol);
}

#[test]
fn trained_models_keep_simplex_and_symmetry() {
    let (data, _) = random_data(12, 5, 3, 10_000, 2);
    let (model, _) = train(&data, &quick_config(4, 1)).unwrap();
    model.validate().unwrap();
    assert!(model.symmetry_drift() <= 1e-9);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let (data, _) = random_data(30, 6, 3, 50_000, 5);
    let config = quick_config(3, 9);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let (a, ta) = one.install(|| train(&data, &config)).unwrap();
    let (b, tb) = four.install(|| train(&data, &config)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.best, tb.best);
    for (x, y) in ta.restarts.iter().zip(&tb.restarts) {
        assert_eq!(x.loglik, y.loglik);
    }
}
