#![allow(dead_code)]

use immsbm::synthetic::{generate, ground_truth, GeneratorSpec};
use immsbm::{ImmsbmModel, TrainConfig, TripletDataset};

pub fn random_model(n_inputs: usize, n_outputs: usize, clusters: usize, seed: u64) -> ImmsbmModel {
    ground_truth(&GeneratorSpec::new(n_inputs, n_outputs, clusters, 1, seed)).unwrap()
}

pub fn random_data(
    n_inputs: usize,
    n_outputs: usize,
    clusters: usize,
    samples: u64,
    seed: u64,
) -> (TripletDataset, ImmsbmModel) {
    generate(&GeneratorSpec::new(
        n_inputs, n_outputs, clusters, samples, seed,
    ))
    .unwrap()
}

pub fn quick_config(clusters: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        clusters,
        restarts: 2,
        max_iters: 60,
        rel_tol: 1e-7,
        seed,
        ..TrainConfig::default()
    }
}

/// Counts of each output over all triplets divided by the total.
pub fn empirical_frequency(data: &TripletDataset) -> Vec<f64> {
    let counts = data.output_counts();
    let total = data.total_weight() as f64;
    counts.iter().map(|&c| c as f64 / total).collect()
}
