//! Reference predictors: output frequencies, the classical (non-interacting)
//! MMSBM on `(input, output)` pairs, and the per-pair empirical frequency that
//! bounds any model's likelihood on a fixed evaluation set.

use std::collections::BTreeMap;

use crate::dataset::TripletDataset;
use crate::em::{run_restarts, select_by_aic, EmProblem, Selection, Step, TrainConfig, TrainTrace};
use crate::error::{Error, Result};
use crate::model::{check_simplex, floored_ln, PairPredictor};
use crate::par;
use crate::random::{fill_flat_dirichlet, SeededRng};
use crate::vocab::Vocabulary;

/// Predicts the output marginal for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBaseline {
    n_inputs: usize,
    marginal: Vec<f64>,
}

impl NaiveBaseline {
    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }
}

/// Output frequencies of `data`, weighted by triplet counts.
pub fn naive_fit(data: &TripletDataset) -> Result<NaiveBaseline> {
    if data.is_empty() {
        return Err(Error::Empty(
            "cannot fit output frequencies on an empty dataset".into(),
        ));
    }
    let total = data.total_weight() as f64;
    Ok(NaiveBaseline {
        n_inputs: data.vocab().n_inputs(),
        marginal: data
            .output_counts()
            .iter()
            .map(|&c| c as f64 / total)
            .collect(),
    })
}

impl PairPredictor for NaiveBaseline {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_outputs(&self) -> usize {
        self.marginal.len()
    }

    fn predict_into(&self, _i: usize, _j: usize, out: &mut [f64]) -> bool {
        out.copy_from_slice(&self.marginal);
        true
    }
}

/// Per pair: total count and the observed `(output, count)` entries.
type PairTable = BTreeMap<(usize, usize), (u64, Vec<(usize, u64)>)>;

/// Conditional output frequencies `N_(i,j),x / sum_x' N_(i,j),x'` for every
/// pair seen in the reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperLimit {
    n_inputs: usize,
    n_outputs: usize,
    table: PairTable,
    fallback: Option<NaiveBaseline>,
}

pub fn upper_limit(reference: &TripletDataset) -> UpperLimit {
    let mut table: PairTable = BTreeMap::new();
    for t in reference.triplets() {
        let entry = table.entry((t.i, t.j)).or_default();
        entry.0 += t.count;
        entry.1.push((t.x, t.count));
    }
    UpperLimit {
        n_inputs: reference.vocab().n_inputs(),
        n_outputs: reference.vocab().n_outputs(),
        table,
        fallback: None,
    }
}

impl UpperLimit {
    /// Pairs absent from the reference get `fallback`'s prediction instead of
    /// being skipped.
    pub fn with_fallback(mut self, fallback: NaiveBaseline) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn covers(&self, i: usize, j: usize) -> bool {
        self.table.contains_key(&(i, j))
    }

    /// Conditional distribution for a reference pair.
    pub fn distribution(&self, i: usize, j: usize) -> Option<Vec<f64>> {
        let (total, entries) = self.table.get(&(i, j))?;
        let mut out = vec![0.0; self.n_outputs];
        for &(x, c) in entries {
            out[x] = c as f64 / *total as f64;
        }
        Some(out)
    }
}

impl PairPredictor for UpperLimit {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    fn predict_into(&self, i: usize, j: usize, out: &mut [f64]) -> bool {
        match self.table.get(&(i, j)) {
            Some((total, entries)) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for &(x, c) in entries {
                    out[x] = c as f64 / *total as f64;
                }
                true
            }
            None => match &self.fallback {
                Some(naive) => naive.predict_into(i, j, out),
                None => false,
            },
        }
    }
}

/// `(input, output)` counts obtained by projecting each triplet `(i, j, x)` to
/// `(i, x)`. With a symmetry-closed dataset both members of a pair are
/// credited once per ordered occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputOutputPairs {
    vocab: Vocabulary,
    pairs: Vec<(usize, usize, u64)>,
}

impl InputOutputPairs {
    pub fn from_triplets(data: &TripletDataset) -> Self {
        let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for t in data.triplets() {
            *counts.entry((t.i, t.x)).or_insert(0) += t.count;
        }
        Self {
            vocab: data.vocab().clone(),
            pairs: counts.into_iter().map(|((i, x), c)| (i, x, c)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize, u64)] {
        &self.pairs
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn exposure(&self) -> Vec<u64> {
        let mut n = vec![0; self.vocab.n_inputs()];
        for &(i, _, c) in &self.pairs {
            n[i] += c;
        }
        n
    }
}

/// Classical MMSBM: `P_i(x) = sum_k theta_ik p_k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsbmModel {
    clusters: usize,
    theta: Vec<f64>,
    p: Vec<f64>,
    vocab: Vocabulary,
}

impl MmsbmModel {
    pub fn new(vocab: Vocabulary, clusters: usize, theta: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let model = Self::from_parts(vocab, clusters, theta, p)?;
        for i in 0..model.vocab.n_inputs() {
            check_simplex(model.theta_row(i), || format!("theta row {i}"))?;
        }
        for k in 0..clusters {
            check_simplex(model.emission(k), || format!("p row {k}"))?;
        }
        Ok(model)
    }

    fn from_parts(
        vocab: Vocabulary,
        clusters: usize,
        theta: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::InvalidModel("T must be at least 1".into()));
        }
        if vocab.n_outputs() == 0 {
            return Err(Error::InvalidModel("output space is empty".into()));
        }
        if vocab.n_inputs().checked_mul(clusters) != Some(theta.len()) {
            return Err(Error::InvalidModel(format!(
                "theta has {} entries, expected {}x{clusters}",
                theta.len(),
                vocab.n_inputs()
            )));
        }
        if clusters.checked_mul(vocab.n_outputs()) != Some(p.len()) {
            return Err(Error::InvalidModel(format!(
                "p has {} entries, expected {clusters}x{}",
                p.len(),
                vocab.n_outputs()
            )));
        }
        Ok(Self {
            clusters,
            theta,
            p,
            vocab,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Row-major `[T x O]`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn theta_row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.clusters..(i + 1) * self.clusters]
    }

    pub fn emission(&self, k: usize) -> &[f64] {
        let o = self.vocab.n_outputs();
        &self.p[k * o..(k + 1) * o]
    }

    /// `P_i(.)` for a single input.
    pub fn predict_input(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.vocab.n_inputs() {
            return Err(Error::OutOfRange(format!("input id {i}")));
        }
        let mut out = vec![0.0; self.vocab.n_outputs()];
        self.add_input(i, 1.0, &mut out);
        Ok(out)
    }

    fn add_input(&self, i: usize, weight: f64, out: &mut [f64]) {
        for (k, &a) in self.theta_row(i).iter().enumerate() {
            let w = weight * a;
            for (o, &v) in out.iter_mut().zip(self.emission(k)) {
                *o += w * v;
            }
        }
    }

    fn probability(&self, i: usize, x: usize) -> f64 {
        let o = self.vocab.n_outputs();
        self.theta_row(i)
            .iter()
            .enumerate()
            .map(|(k, a)| a * self.p[k * o + x])
            .sum()
    }

    /// `sum count * ln P_i(x)` over projected pairs.
    pub fn log_likelihood(&self, pairs: &InputOutputPairs) -> Result<f64> {
        if pairs.vocab().n_inputs() != self.vocab.n_inputs()
            || pairs.vocab().n_outputs() != self.vocab.n_outputs()
        {
            return Err(Error::DimensionMismatch(
                "pairs and model vocabularies differ in size".into(),
            ));
        }
        Ok(pairs
            .pairs()
            .iter()
            .map(|&(i, x, c)| c as f64 * floored_ln(self.probability(i, x)))
            .sum())
    }
}

/// A pair is scored by the average of its two members' distributions.
impl PairPredictor for MmsbmModel {
    fn n_inputs(&self) -> usize {
        self.vocab.n_inputs()
    }

    fn n_outputs(&self) -> usize {
        self.vocab.n_outputs()
    }

    fn predict_into(&self, i: usize, j: usize, out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.add_input(i, 0.5, out);
        self.add_input(j, 0.5, out);
        true
    }
}

struct MmsbmProblem<'a> {
    pairs: &'a InputOutputPairs,
    clusters: usize,
    exposure: Vec<u64>,
}

struct MmsbmParams {
    theta: Vec<f64>,
    p: Vec<f64>,
}

struct MmsbmStats {
    theta: Vec<f64>,
    p: Vec<f64>,
    loglik: f64,
    degenerate: usize,
}

impl EmProblem for MmsbmProblem<'_> {
    type Params = MmsbmParams;

    fn init(&self, rng: &mut SeededRng) -> MmsbmParams {
        let t = self.clusters;
        let o = self.pairs.vocab().n_outputs();
        let mut theta = vec![0.0; self.pairs.vocab().n_inputs() * t];
        for (row, &n) in theta.chunks_mut(t).zip(&self.exposure) {
            if n == 0 {
                row.iter_mut().for_each(|v| *v = 1.0 / t as f64);
            } else {
                fill_flat_dirichlet(rng, row);
            }
        }
        let mut p = vec![0.0; t * o];
        for row in p.chunks_mut(o) {
            fill_flat_dirichlet(rng, row);
        }
        MmsbmParams { theta, p }
    }

    fn step(&self, params: &MmsbmParams) -> Step<MmsbmParams> {
        let t = self.clusters;
        let n_in = self.pairs.vocab().n_inputs();
        let o = self.pairs.vocab().n_outputs();
        let (theta, p) = (&params.theta, &params.p);
        let make = || {
            (
                MmsbmStats {
                    theta: vec![0.0; n_in * t],
                    p: vec![0.0; t * o],
                    loglik: 0.0,
                    degenerate: 0,
                },
                vec![0.0; t],
            )
        };
        let (stats, _) = par::fold_chunks(
            self.pairs.pairs(),
            make,
            |(acc, omega), &(i, x, c)| {
                let mut norm = 0.0;
                for k in 0..t {
                    omega[k] = theta[i * t + k] * p[k * o + x];
                    norm += omega[k];
                }
                let c = c as f64;
                acc.loglik += c * floored_ln(norm);
                if norm > 0.0 && norm.is_finite() {
                    omega.iter_mut().for_each(|v| *v /= norm);
                } else {
                    acc.degenerate += 1;
                    omega.iter_mut().for_each(|v| *v = 1.0 / t as f64);
                }
                for (k, &w) in omega.iter().enumerate() {
                    acc.theta[i * t + k] += c * w;
                    acc.p[k * o + x] += c * w;
                }
            },
            |(a, _), (b, _)| {
                a.loglik += b.loglik;
                a.degenerate += b.degenerate;
                a.theta.iter_mut().zip(&b.theta).for_each(|(u, v)| *u += v);
                a.p.iter_mut().zip(&b.p).for_each(|(u, v)| *u += v);
            },
        );
        let mut new_theta = stats.theta;
        for (m, &n) in self.exposure.iter().enumerate() {
            let row = m * t..(m + 1) * t;
            if n == 0 {
                new_theta[row.clone()].copy_from_slice(&theta[row]);
            } else {
                new_theta[row].iter_mut().for_each(|v| *v /= n as f64);
            }
        }
        let mut new_p = stats.p;
        let mut degenerate = stats.degenerate;
        for row in new_p.chunks_mut(o) {
            let denom: f64 = row.iter().sum();
            if denom > 0.0 && denom.is_finite() {
                row.iter_mut().for_each(|v| *v /= denom);
            } else {
                degenerate += 1;
                row.iter_mut().for_each(|v| *v = 1.0 / o as f64);
            }
        }
        Step {
            loglik: stats.loglik,
            next: MmsbmParams {
                theta: new_theta,
                p: new_p,
            },
            degenerate,
        }
    }
}

/// Trains the classical MMSBM by EM with the same restart and stopping rules
/// as the interacting model.
pub fn mmsbm_train(
    pairs: &InputOutputPairs,
    config: &TrainConfig,
) -> Result<(MmsbmModel, TrainTrace)> {
    config.validate()?;
    if pairs.pairs().is_empty() {
        return Err(Error::Empty("no (input, output) pairs".into()));
    }
    let problem = MmsbmProblem {
        pairs,
        clusters: config.clusters,
        exposure: pairs.exposure(),
    };
    let (params, trace) = run_restarts(&problem, config);
    if !trace.best_loglik().is_finite() {
        return Err(Error::Numeric("log-likelihood is not finite".into()));
    }
    let model = MmsbmModel::from_parts(
        pairs.vocab().clone(),
        config.clusters,
        params.theta,
        params.p,
    )?;
    Ok((model, trace))
}

/// Free parameters of the classical MMSBM: `I(T-1) + T(O-1)`.
pub fn mmsbm_free_parameters(n_inputs: usize, n_outputs: usize, clusters: usize) -> usize {
    n_inputs * (clusters - 1) + clusters * n_outputs.saturating_sub(1)
}

pub fn mmsbm_select_clusters(
    pairs: &InputOutputPairs,
    candidates: &[usize],
    config: &TrainConfig,
) -> Result<Selection> {
    select_by_aic(candidates, |clusters| {
        let cfg = TrainConfig {
            clusters,
            ..config.clone()
        };
        let (_, trace) = mmsbm_train(pairs, &cfg)?;
        let k = mmsbm_free_parameters(
            pairs.vocab().n_inputs(),
            pairs.vocab().n_outputs(),
            clusters,
        );
        Ok((trace.best_loglik(), k))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TripletCounts;

    fn dataset(vocab: Vocabulary, entries: &[((usize, usize, usize), u64)]) -> TripletDataset {
        let counts: TripletCounts = entries.iter().copied().collect();
        TripletDataset::from_counts_closing(vocab, counts)
            .unwrap()
            .0
    }

    fn flu() -> TripletDataset {
        let vocab = Vocabulary::from_labels(
            vec!["fever".into(), "pallor".into()],
            vec!["influenza".into(), "anemia".into()],
        )
        .unwrap();
        dataset(vocab, &[((0, 1, 0), 2), ((0, 1, 1), 1)])
    }

    #[test]
    fn naive_is_count_ratio() {
        let data = dataset(
            Vocabulary::numbered(2, 2),
            &[((0, 0, 0), 3), ((1, 1, 1), 1)],
        );
        let naive = naive_fit(&data).unwrap();
        let mut out = vec![0.0; 2];
        for (i, j) in [(0, 0), (0, 1), (1, 0)] {
            assert!(naive.predict_into(i, j, &mut out));
            assert_eq!(out, vec![0.75, 0.25]);
        }
        let single = dataset(Vocabulary::numbered(1, 1), &[((0, 0, 0), 5)]);
        assert_eq!(naive_fit(&single).unwrap().marginal(), &[1.0]);
        let uniform = dataset(
            Vocabulary::numbered(1, 4),
            &[
                ((0, 0, 0), 2),
                ((0, 0, 1), 2),
                ((0, 0, 2), 2),
                ((0, 0, 3), 2),
            ],
        );
        assert_eq!(naive_fit(&uniform).unwrap().marginal(), &[0.25; 4]);
    }

    #[test]
    fn upper_limit_flu_example() {
        let ul = upper_limit(&flu());
        let dist = ul.distribution(0, 1).unwrap();
        assert_eq!(dist[0], 2.0 / 3.0);
        assert_eq!(dist[1], 1.0 / 3.0);
        assert_eq!(ul.distribution(1, 0).unwrap(), dist);
        assert!(ul.distribution(0, 0).is_none());
        let mut out = vec![0.0; 2];
        assert!(!ul.predict_into(0, 0, &mut out));
        let with = ul.clone().with_fallback(naive_fit(&flu()).unwrap());
        assert!(with.predict_into(0, 0, &mut out));
        assert_eq!(out[0], 2.0 / 3.0);
    }

    #[test]
    fn single_outcome_pair_is_certain() {
        let ul = upper_limit(&dataset(Vocabulary::numbered(2, 3), &[((0, 1, 2), 4)]));
        assert_eq!(ul.distribution(0, 1).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn projection_counts_each_ordered_occurrence() {
        let pairs = InputOutputPairs::from_triplets(&flu());
        assert_eq!(pairs.pairs(), &[(0, 0, 2), (0, 1, 1), (1, 0, 2), (1, 1, 1)]);
    }

    #[test]
    fn mmsbm_single_cluster_is_frequency() {
        let data = dataset(
            Vocabulary::numbered(3, 3),
            &[
                ((0, 1, 0), 3),
                ((1, 2, 1), 2),
                ((2, 2, 2), 5),
                ((0, 0, 1), 1),
            ],
        );
        let pairs = InputOutputPairs::from_triplets(&data);
        let (m, trace) = mmsbm_train(
            &pairs,
            &TrainConfig {
                clusters: 1,
                restarts: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let counts = data.output_counts();
        let total = data.total_weight() as f64;
        for (x, &c) in counts.iter().enumerate() {
            assert!((m.emission(0)[x] - c as f64 / total).abs() < 1e-12);
        }
        assert!(trace
            .restarts
            .iter()
            .all(|r| r.worst_relative_drop() <= 1e-9));
    }

    #[test]
    fn mmsbm_pair_prediction_averages_members() {
        let m = MmsbmModel::new(
            Vocabulary::numbered(2, 2),
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.8, 0.2, 0.4, 0.6],
        )
        .unwrap();
        let mut out = vec![0.0; 2];
        m.predict_into(0, 1, &mut out);
        assert!((out[0] - 0.6).abs() < 1e-15);
        assert_eq!(m.predict_input(1).unwrap(), vec![0.4, 0.6]);
        assert!(m.predict_input(2).is_err());
    }

    #[test]
    fn mmsbm_rejects_bad_parameters() {
        let v = Vocabulary::numbered(1, 2);
        assert!(MmsbmModel::new(v.clone(), 1, vec![1.0], vec![0.5, 0.6]).is_err());
        assert!(MmsbmModel::new(v, 1, vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn mmsbm_parameter_count() {
        assert_eq!(mmsbm_free_parameters(10, 5, 3), 20 + 12);
    }
}
