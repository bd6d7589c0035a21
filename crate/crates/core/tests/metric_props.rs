mod common;

use common::{quick_config, random_data, random_model};
use immsbm::baselines::{naive_fit, upper_limit};
use immsbm::eval::{
    auc_roc, evaluate, max_f1, precision_at_k, score_all, EvalOptions, PatkDenominator,
    ScoredInstance,
};
use immsbm::train;
use proptest::prelude::*;

/// Pairs of `n_out` instances each; probabilities drawn from a coarse grid so
/// ties occur.
fn instances(n_out: usize) -> impl Strategy<Value = Vec<ScoredInstance>> {
    prop::collection::vec(prop::collection::vec((0u8..=10, 0u64..3), n_out), 1..12).prop_map(
        move |pairs| {
            let mut out = Vec::new();
            for (p, row) in pairs.iter().enumerate() {
                let total: u64 = row.iter().map(|r| r.1).sum();
                for (x, &(q, c)) in row.iter().enumerate() {
                    out.push(ScoredInstance {
                        i: p,
                        j: p,
                        x,
                        probability: q as f64 / 10.0,
                        observed: c > 0,
                        count: c,
                        pair_total: total,
                    });
                }
            }
            out
        },
    )
}

fn f1_at(instances: &[ScoredInstance], threshold: f64) -> f64 {
    let tp = instances
        .iter()
        .filter(|s| s.observed && s.probability >= threshold)
        .count() as f64;
    let fp = instances
        .iter()
        .filter(|s| !s.observed && s.probability >= threshold)
        .count() as f64;
    let pos = instances.iter().filter(|s| s.observed).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let (p, r) = (tp / (tp + fp), tp / pos);
    2.0 * p * r / (p + r)
}

proptest! {
    #[test]
    fn max_f1_dominates_every_threshold(inst in instances(4), t in 0.0f64..1.0) {
        let best = max_f1(&inst);
        prop_assert!(best.f1 + 1e-12 >= f1_at(&inst, t));
        for point in &best.curve {
            prop_assert!(best.f1 + 1e-12 >= point.f1);
        }
        prop_assert!((0.0..=1.0).contains(&best.f1));
    }

    #[test]
    fn auc_invariant_under_monotone_transform(inst in instances(3), power in 0.2f64..5.0, shift in -3.0f64..3.0) {
        let transformed: Vec<ScoredInstance> = inst
            .iter()
            .map(|s| ScoredInstance { probability: (s.probability.powf(power) + shift).exp() / 100.0, ..*s })
            .collect();
        let a = auc_roc(&inst);
        let b = auc_roc(&transformed);
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (None, None) => {}
            _ => prop_assert!(false, "definedness changed"),
        }
    }

    #[test]
    fn precision_at_k_invariant_under_relabeling(
        perm in Just(()).prop_perturb(|_, mut rng| {
            let mut v: Vec<usize> = (0..6).collect();
            for i in (1..v.len()).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            v
        }),
        rows in prop::collection::vec(prop::collection::vec(0u64..3, 6), 1..8),
        k in 1usize..7,
        min in any::<bool>(),
    ) {
        // Distinct probabilities per pair so ranking has no ties.
        let build = |perm: &[usize]| -> Vec<ScoredInstance> {
            let mut out = Vec::new();
            for (p, row) in rows.iter().enumerate() {
                let total = row.iter().sum();
                for (x, &c) in row.iter().enumerate() {
                    out.push(ScoredInstance {
                        i: p, j: p, x: perm[x],
                        probability: ((x * 7 + p * 3) % 6 + 1) as f64 / 7.0,
                        observed: c > 0, count: c, pair_total: total,
                    });
                }
            }
            out
        };
        let denom = if min { PatkDenominator::Min } else { PatkDenominator::K };
        let identity: Vec<usize> = (0..6).collect();
        let a = precision_at_k(&build(&identity), k, denom);
        let b = precision_at_k(&build(&perm), k, denom);
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn naive_is_pair_invariant(n_in in 1usize..8, n_out in 1usize..5, seed in any::<u64>()) {
        let (data, _) = random_data(n_in, n_out, 2, 300, seed);
        let naive = naive_fit(&data).unwrap();
        let first = naive.marginal().to_vec();
        let mut out = vec![0.0; n_out];
        use immsbm::PairPredictor;
        for i in 0..n_in {
            for j in 0..n_in {
                prop_assert!(naive.predict_into(i, j, &mut out));
                prop_assert_eq!(&out, &first);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn upper_limit_wins_on_its_reference_set(
        n_in in 2usize..8, n_out in 2usize..6, seed in any::<u64>(),
    ) {
        let (data, _) = random_data(n_in, n_out, 2, 400, seed);
        let opts = EvalOptions::default();
        let upper = evaluate(&upper_limit(&data), &data, None, &opts).unwrap();
        let (trained, _) = train(&data, &quick_config(2, seed)).unwrap();
        let others = [
            evaluate(&naive_fit(&data).unwrap(), &data, None, &opts).unwrap(),
            evaluate(&trained, &data, None, &opts).unwrap(),
            evaluate(&random_model(n_in, n_out, 3, seed), &data, None, &opts).unwrap(),
        ];
        for o in &others {
            prop_assert!(upper.max_f1 + 1e-12 >= o.max_f1);
            prop_assert!(upper.auc_roc + 1e-12 >= o.auc_roc);
            prop_assert!(upper.precision_at_k + 1e-12 >= o.precision_at_k);
            prop_assert!(upper.log_likelihood + 1e-9 * upper.log_likelihood.abs().max(1.0) >= o.log_likelihood);
        }
        prop_assert_eq!(score_all(&upper_limit(&data), &data).unwrap().skipped_pairs, 0);
    }
}
