//! The interacting model: memberships `theta` [I x T] and cluster-pair output
//! distributions `p` [T x T x O], with `P_ij(x) = sum_kl theta_ik theta_jl p_kl(x)`.

use crate::dataset::TripletDataset;
use crate::error::{Error, Result};
use crate::par;
use crate::vocab::Vocabulary;

/// Floor applied inside every logarithm.
pub const LN_FLOOR: f64 = 1e-300;

/// `ln p` with `p` clamped to `[LN_FLOOR, 1]`; rounding can push a summed
/// probability a hair above one.
#[inline]
pub fn floored_ln(p: f64) -> f64 {
    p.clamp(LN_FLOOR, 1.0).ln()
}

/// Tolerance for simplex sums and pair symmetry.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Anything that yields an output distribution for an input pair.
pub trait PairPredictor: Sync {
    fn n_inputs(&self) -> usize;

    fn n_outputs(&self) -> usize;

    /// Writes the distribution over outputs for `(i, j)` into `out`.
    /// Returns `false` when the predictor has nothing to say about the pair.
    fn predict_into(&self, i: usize, j: usize, out: &mut [f64]) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmsbmModel {
    clusters: usize,
    theta: Vec<f64>,
    p: Vec<f64>,
    vocab: Vocabulary,
}

pub(crate) fn check_simplex(values: &[f64], what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidModel(format!("{} has entry {v}", what())));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidModel(format!("{} sums to {sum}", what())));
    }
    Ok(())
}

impl ImmsbmModel {
    /// Validated constructor: shapes, simplex rows and fibers, and
    /// `p_kl = p_lk`.
    pub fn new(vocab: Vocabulary, clusters: usize, theta: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let model = Self::from_parts(vocab, clusters, theta, p)?;
        model.validate()?;
        Ok(model)
    }

    /// Shape-checked constructor that skips the simplex checks.
    pub(crate) fn from_parts(
        vocab: Vocabulary,
        clusters: usize,
        theta: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::InvalidModel("T must be at least 1".into()));
        }
        let n_in = vocab.n_inputs();
        let n_out = vocab.n_outputs();
        let theta_len = n_in.checked_mul(clusters);
        let p_len = clusters
            .checked_mul(clusters)
            .and_then(|t2| t2.checked_mul(n_out));
        if theta_len != Some(theta.len()) {
            return Err(Error::InvalidModel(format!(
                "theta has {} entries, expected {n_in}x{clusters}",
                theta.len()
            )));
        }
        if p_len != Some(p.len()) {
            return Err(Error::InvalidModel(format!(
                "p has {} entries, expected {clusters}x{clusters}x{n_out}",
                p.len()
            )));
        }
        if n_out == 0 {
            return Err(Error::InvalidModel("output space is empty".into()));
        }
        Ok(Self {
            clusters,
            theta,
            p,
            vocab,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n_inputs() {
            check_simplex(self.theta_row(i), || format!("theta row {i}"))?;
        }
        for k in 0..self.clusters {
            for l in 0..self.clusters {
                check_simplex(self.fiber(k, l), || format!("p fiber ({k},{l})"))?;
                if l > k {
                    let drift = self.symmetry_drift_of(k, l);
                    if drift > SIMPLEX_TOL {
                        return Err(Error::InvalidModel(format!(
                            "p fibers ({k},{l}) and ({l},{k}) differ by {drift}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn symmetry_drift_of(&self, k: usize, l: usize) -> f64 {
        self.fiber(k, l)
            .iter()
            .zip(self.fiber(l, k))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|p_kl(x) - p_lk(x)|` over the tensor.
    pub fn symmetry_drift(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.clusters {
            for l in k + 1..self.clusters {
                worst = worst.max(self.symmetry_drift_of(k, l));
            }
        }
        worst
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters
    }

    pub fn n_inputs(&self) -> usize {
        self.vocab.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.vocab.n_outputs()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Row-major `[I x T]`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `k`-major, then `l`, then `x`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn theta_row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.clusters..(i + 1) * self.clusters]
    }

    pub fn fiber(&self, k: usize, l: usize) -> &[f64] {
        let o = self.n_outputs();
        let start = (k * self.clusters + l) * o;
        &self.p[start..start + o]
    }

    fn check_input(&self, i: usize) -> Result<()> {
        if i >= self.n_inputs() {
            return Err(Error::OutOfRange(format!(
                "input id {i} with {} inputs",
                self.n_inputs()
            )));
        }
        Ok(())
    }

    /// `P_ij(.)` for an input pair.
    pub fn predict_pair(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        self.check_input(i)?;
        self.check_input(j)?;
        let mut out = vec![0.0; self.n_outputs()];
        self.fill_prediction(i, j, &mut out);
        Ok(out)
    }

    fn fill_prediction(&self, i: usize, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (ti, tj) = (self.theta_row(i), self.theta_row(j));
        for (k, &a) in ti.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (l, &b) in tj.iter().enumerate() {
                let w = a * b;
                if w == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(self.fiber(k, l)) {
                    *o += w * v;
                }
            }
        }
    }

    /// Probability of a single output for a pair, without building the vector.
    pub fn pair_probability(&self, i: usize, j: usize, x: usize) -> f64 {
        let t = self.clusters;
        let o = self.n_outputs();
        let (ti, tj) = (self.theta_row(i), self.theta_row(j));
        let mut s = 0.0;
        for (k, &a) in ti.iter().enumerate() {
            let row = k * t;
            let mut inner = 0.0;
            for (l, &b) in tj.iter().enumerate() {
                inner += b * self.p[(row + l) * o + x];
            }
            s += a * inner;
        }
        s
    }

    /// Intrinsic virality of `i` on `x`: the diagonal prediction `P_ii(x)`.
    pub fn virality(&self, i: usize, x: usize) -> Result<f64> {
        self.check_input(i)?;
        if x >= self.n_outputs() {
            return Err(Error::OutOfRange(format!("output id {x}")));
        }
        Ok(self.pair_probability(i, i, x))
    }

    pub(crate) fn check_compatible(&self, data: &TripletDataset) -> Result<()> {
        let v = data.vocab();
        if v.n_inputs() != self.n_inputs() || v.n_outputs() != self.n_outputs() {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{} (inputs x outputs), data is {}x{}",
                self.n_inputs(),
                self.n_outputs(),
                v.n_inputs(),
                v.n_outputs()
            )));
        }
        Ok(())
    }

    /// `sum count * ln P_ij(x)` over the dataset, each log argument floored at
    /// [`LN_FLOOR`].
    pub fn log_likelihood(&self, data: &TripletDataset) -> Result<f64> {
        self.check_compatible(data)?;
        Ok(par::fold_chunks(
            data.triplets(),
            || 0.0f64,
            |acc, t| {
                let prob = self.pair_probability(t.i, t.j, t.x);
                *acc += t.count as f64 * floored_ln(prob);
            },
            |a, b| *a += b,
        ))
    }
}

impl PairPredictor for ImmsbmModel {
    fn n_inputs(&self) -> usize {
        self.vocab.n_inputs()
    }

    fn n_outputs(&self) -> usize {
        self.vocab.n_outputs()
    }

    fn predict_into(&self, i: usize, j: usize, out: &mut [f64]) -> bool {
        self.fill_prediction(i, j, out);
        true
    }
}
