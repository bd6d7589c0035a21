mod common;

use common::{random_data, random_model};
use immsbm::analysis::{membership_entropy, row_entropy, v_bar, v_matrix};
use immsbm::synthetic::{generate, make_noninteracting, GeneratorSpec, NonInteracting};
use immsbm::ImmsbmModel;
use proptest::prelude::*;

fn permute_clusters(model: &ImmsbmModel, perm: &[usize]) -> ImmsbmModel {
    let (n_in, n_out, t) = (model.n_inputs(), model.n_outputs(), model.n_clusters());
    let mut theta = vec![0.0; n_in * t];
    for i in 0..n_in {
        for k in 0..t {
            theta[i * t + perm[k]] = model.theta_row(i)[k];
        }
    }
    let mut p = vec![0.0; t * t * n_out];
    for k in 0..t {
        for l in 0..t {
            let dst = (perm[k] * t + perm[l]) * n_out;
            p[dst..dst + n_out].copy_from_slice(model.fiber(k, l));
        }
    }
    ImmsbmModel::new(model.vocab().clone(), t, theta, p).unwrap()
}

fn sharpen(model: &ImmsbmModel, power: f64) -> ImmsbmModel {
    let t = model.n_clusters();
    let mut theta = Vec::with_capacity(model.theta().len());
    for i in 0..model.n_inputs() {
        let row: Vec<f64> = model.theta_row(i).iter().map(|v| v.powf(power)).collect();
        let z: f64 = row.iter().sum();
        theta.extend(row.iter().map(|v| v / z));
    }
    ImmsbmModel::new(model.vocab().clone(), t, theta, model.p().to_vec()).unwrap()
}

proptest! {
    #[test]
    fn entropy_bounded_and_sharpening_lowers_it(
        n_in in 1usize..10, t in 1usize..6, seed in any::<u64>(), power in 1.01f64..6.0,
    ) {
        let model = random_model(n_in, 3, t, seed);
        let before = membership_entropy(&model);
        for &e in &before.per_entity {
            prop_assert!((0.0..=1.0).contains(&e));
        }
        let after = membership_entropy(&sharpen(&model, power));
        prop_assert!(after.mean <= before.mean + 1e-12);
        for (a, b) in after.per_entity.iter().zip(&before.per_entity) {
            prop_assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn row_entropy_in_unit_interval(row in prop::collection::vec(0.0f64..1.0, 1..9)) {
        let z: f64 = row.iter().sum();
        prop_assume!(z > 0.0);
        let row: Vec<f64> = row.iter().map(|v| v / z).collect();
        let h = row_entropy(&row);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn interaction_measures_ignore_cluster_order(
        n_in in 2usize..8, n_out in 2usize..5, t in 2usize..5, seed in any::<u64>(),
        perm in Just(()).prop_perturb(|_, mut rng| {
            let mut v: Vec<usize> = (0..5).collect();
            for i in (1..v.len()).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            v
        }),
    ) {
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = perm.into_iter().filter(|&v| v < t).collect();
            p.truncate(t);
            p
        };
        let (data, model) = random_data(n_in, n_out, t, 400, seed);
        let permuted = permute_clusters(&model, &perm);
        let a = v_bar(&model, &data).unwrap();
        let b = v_bar(&permuted, &data).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12);
        prop_assert_eq!(a.skipped_weight, b.skipped_weight);
        prop_assert!(a.value >= 0.0);
        let va = v_matrix(&model, &data).unwrap();
        let vb = v_matrix(&permuted, &data).unwrap();
        for k in 0..t {
            for l in 0..t {
                let (x, y) = (va[k * t + l], vb[perm[k] * t + perm[l]]);
                prop_assert!(x.is_finite());
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_cluster_has_no_interaction(n_in in 1usize..8, n_out in 1usize..5, seed in any::<u64>()) {
        let (data, model) = random_data(n_in, n_out, 1, 300, seed);
        prop_assert_eq!(v_bar(&model, &data).unwrap().value, 0.0);
    }

    #[test]
    fn constant_fibers_have_no_interaction(n_in in 1usize..8, n_out in 1usize..5, t in 2usize..5, seed in any::<u64>()) {
        let spec = make_noninteracting(&GeneratorSpec::new(n_in, n_out, t, 300, seed), NonInteracting::Constant).unwrap();
        let (data, model) = generate(&spec).unwrap();
        prop_assert!(v_bar(&model, &data).unwrap().value <= 1e-12);
        for v in v_matrix(&model, &data).unwrap() {
            prop_assert!(v.abs() <= 1e-12);
        }
    }
}
