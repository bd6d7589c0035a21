//! Sampling triplet datasets from known parameters.
//!
//! Each sample draws an input pair `(i, j)`, then clusters `k ~ theta_i` and
//! `l ~ theta_j`, then an output `x ~ p_kl`. The triplet and its mirror are
//! both recorded so the result is symmetry-closed.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{TripletCounts, TripletDataset};
use crate::error::{Error, Result};
use crate::model::ImmsbmModel;
use crate::random::{fill_flat_dirichlet, seeded, SeededRng};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PairDistribution {
    /// Uniform over ordered pairs, self-pairs included.
    #[default]
    Uniform,
    /// Each member drawn independently with weight `(rank + 1)^-exponent`.
    PowerLaw { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub clusters: usize,
    /// Row-major `[I x T]`; sampled from a flat Dirichlet per row when absent.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    /// `[T x T x O]`, symmetric in `(k, l)`; sampled when absent.
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    #[serde(default)]
    pub pairs: PairDistribution,
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(
        n_inputs: usize,
        n_outputs: usize,
        clusters: usize,
        samples: u64,
        seed: u64,
    ) -> Self {
        Self {
            n_inputs,
            n_outputs,
            clusters,
            theta: None,
            p: None,
            pairs: PairDistribution::Uniform,
            samples,
            seed,
        }
    }

    fn validate_shape(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_outputs == 0 || self.clusters == 0 {
            return Err(Error::InvalidArgument(
                "generator needs at least one input, output and cluster".into(),
            ));
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument(
                "generator needs at least one sample".into(),
            ));
        }
        if let PairDistribution::PowerLaw { exponent } = self.pairs {
            if !exponent.is_finite() || exponent < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "invalid power-law exponent {exponent}"
                )));
            }
        }
        let sizes = [
            self.n_inputs.checked_mul(self.clusters),
            self.clusters
                .checked_mul(self.clusters)
                .and_then(|v| v.checked_mul(self.n_outputs)),
        ];
        if sizes.iter().any(|s| s.is_none_or(|n| n > 1 << 28)) {
            return Err(Error::InvalidArgument(
                "generator dimensions are too large".into(),
            ));
        }
        Ok(())
    }
}

fn sample_symmetric_p(rng: &mut SeededRng, clusters: usize, n_outputs: usize) -> Vec<f64> {
    let mut p = vec![0.0; clusters * clusters * n_outputs];
    for k in 0..clusters {
        for l in k..clusters {
            let a = (k * clusters + l) * n_outputs;
            fill_flat_dirichlet(rng, &mut p[a..a + n_outputs]);
            if l != k {
                let b = (l * clusters + k) * n_outputs;
                p.copy_within(a..a + n_outputs, b);
            }
        }
    }
    p
}

/// The model a spec describes, sampling any missing parameter from the spec's
/// seed. [`generate`] draws parameters the same way, so the two agree.
pub fn ground_truth(spec: &GeneratorSpec) -> Result<ImmsbmModel> {
    spec.validate_shape()?;
    let mut rng = seeded(spec.seed);
    truth_with_rng(spec, &mut rng)
}

fn truth_with_rng(spec: &GeneratorSpec, rng: &mut SeededRng) -> Result<ImmsbmModel> {
    let theta = match &spec.theta {
        Some(t) => t.clone(),
        None => {
            let mut t = vec![0.0; spec.n_inputs * spec.clusters];
            for row in t.chunks_mut(spec.clusters) {
                fill_flat_dirichlet(rng, row);
            }
            t
        }
    };
    let p = match &spec.p {
        Some(p) => p.clone(),
        None => sample_symmetric_p(rng, spec.clusters, spec.n_outputs),
    };
    ImmsbmModel::new(
        Vocabulary::numbered(spec.n_inputs, spec.n_outputs),
        spec.clusters,
        theta,
        p,
    )
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn draw(rng: &mut SeededRng, cdf: &[f64]) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    let k = cdf.partition_point(|&c| c <= u);
    // Guard against landing past the end or on a zero-width slot by rounding.
    let mut k = k.min(cdf.len() - 1);
    while k > 0 && cdf[k] == cdf[k - 1] {
        k -= 1;
    }
    k
}

/// Samples a dataset and returns it with the model that generated it.
pub fn generate(spec: &GeneratorSpec) -> Result<(TripletDataset, ImmsbmModel)> {
    spec.validate_shape()?;
    let mut rng = seeded(spec.seed);
    let truth = truth_with_rng(spec, &mut rng)?;
    let (n_in, t) = (spec.n_inputs, spec.clusters);
    let theta_cdf: Vec<Vec<f64>> = (0..n_in).map(|i| cumulative(truth.theta_row(i))).collect();
    let p_cdf: Vec<Vec<f64>> = (0..t * t)
        .map(|kl| cumulative(truth.fiber(kl / t, kl % t)))
        .collect();
    let pair_cdf = match spec.pairs {
        PairDistribution::Uniform => None,
        PairDistribution::PowerLaw { exponent } => Some(cumulative(
            &(0..n_in)
                .map(|r| ((r + 1) as f64).powf(-exponent))
                .collect::<Vec<_>>(),
        )),
    };
    let mut counts: HashMap<(usize, usize, usize), u64> = HashMap::new();
    for _ in 0..spec.samples {
        let (i, j) = match &pair_cdf {
            None => (rng.random_range(0..n_in), rng.random_range(0..n_in)),
            Some(cdf) => (draw(&mut rng, cdf), draw(&mut rng, cdf)),
        };
        let k = draw(&mut rng, &theta_cdf[i]);
        let l = draw(&mut rng, &theta_cdf[j]);
        let x = draw(&mut rng, &p_cdf[k * t + l]);
        *counts.entry((i, j, x)).or_insert(0) += 1;
        *counts.entry((j, i, x)).or_insert(0) += 1;
    }
    let counts: TripletCounts = counts.into_iter().collect();
    let data = TripletDataset::from_counts(truth.vocab().clone(), counts)?;
    Ok((data, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonInteracting {
    /// `p_kl = (q_k + q_l) / 2`.
    Averaged,
    /// `p_kl = q` for every pair, so `P_ij = P_ii` exactly.
    Constant,
}

/// Rewrites `p` so that cluster pairs carry no interaction beyond their
/// members' own distributions `q_k` (taken from the diagonal of a provided
/// `p`, or sampled). A single-cluster spec is returned unchanged.
pub fn make_noninteracting(spec: &GeneratorSpec, variant: NonInteracting) -> Result<GeneratorSpec> {
    spec.validate_shape()?;
    if spec.clusters == 1 {
        return Ok(spec.clone());
    }
    let (t, o) = (spec.clusters, spec.n_outputs);
    let q: Vec<Vec<f64>> = match &spec.p {
        Some(p) => {
            if p.len() != t * t * o {
                return Err(Error::InvalidArgument("p has the wrong length".into()));
            }
            (0..t)
                .map(|k| p[(k * t + k) * o..(k * t + k + 1) * o].to_vec())
                .collect()
        }
        None => {
            // Independent stream so theta sampling in `generate` is untouched.
            let mut rng = seeded(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
            (0..t)
                .map(|_| {
                    let mut v = vec![0.0; o];
                    fill_flat_dirichlet(&mut rng, &mut v);
                    v
                })
                .collect()
        }
    };
    let mut p = vec![0.0; t * t * o];
    match variant {
        NonInteracting::Constant => {
            let mean: Vec<f64> = (0..o)
                .map(|x| q.iter().map(|qk| qk[x]).sum::<f64>() / t as f64)
                .collect();
            for fiber in p.chunks_mut(o) {
                fiber.copy_from_slice(&mean);
            }
        }
        NonInteracting::Averaged => {
            for k in 0..t {
                for l in 0..t {
                    let start = (k * t + l) * o;
                    for x in 0..o {
                        p[start + x] = 0.5 * (q[k][x] + q[l][x]);
                    }
                }
            }
        }
    }
    Ok(GeneratorSpec {
        p: Some(p),
        ..spec.clone()
    })
}
