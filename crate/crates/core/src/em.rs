//! Multi-restart expectation-maximization for [`ImmsbmModel`].
//!
//! Training never stores responsibilities: each iteration is one pass over
//! the unique triplets that computes `omega_ijx(k, l)` on the fly and folds it
//! into the sufficient statistics for `theta` and `p`. The standalone
//! [`e_step`], [`m_step_theta`] and [`m_step_p`] functions materialize the
//! same quantities and exist for inspection and testing.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TripletDataset;
use crate::error::{Error, Result};
use crate::model::{floored_ln, ImmsbmModel};
use crate::par;
use crate::random::{fill_flat_dirichlet, seeded, SeededRng};

/// How free parameters are counted for AIC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AicParams {
    /// `I(T-1) + T^2 (O-1)`.
    #[default]
    Plain,
    /// `I(T-1) + T(T+1)/2 (O-1)`, counting only the independent half of a
    /// symmetric `p`.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub clusters: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once `|l_t - l_{t-1}| / |l_{t-1}|` drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub aic_params: AicParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            clusters: 5,
            restarts: 10,
            max_iters: 1000,
            rel_tol: 1e-5,
            seed: 0,
            aic_params: AicParams::Plain,
        }
    }
}

impl TrainConfig {
    pub fn with_clusters(clusters: usize) -> Self {
        Self {
            clusters,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::InvalidArgument(
                "number of clusters must be at least 1".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 || !self.rel_tol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive and finite, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Log of one restart. `loglik[t]` is the log-likelihood of the parameters
/// after `t` EM updates; the returned parameters are those of the last entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub seed: u64,
    pub loglik: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Number of EM updates applied.
    pub iterations: usize,
    pub converged: bool,
    /// Triplets or cluster pairs that hit a zero normalizer and were
    /// replaced by a uniform distribution, summed over iterations.
    pub degenerate: usize,
}

impl RestartTrace {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik.last().expect("trace has at least one entry")
    }

    /// Largest relative drop between consecutive iterations (0 if monotone).
    pub fn worst_relative_drop(&self) -> f64 {
        self.loglik
            .windows(2)
            .map(|w| {
                let drop = w[0] - w[1];
                if drop > 0.0 {
                    drop / w[0].abs().max(f64::MIN_POSITIVE)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    pub restarts: Vec<RestartTrace>,
    /// Index of the restart whose parameters were kept.
    pub best: usize,
}

impl TrainTrace {
    pub fn chosen(&self) -> &RestartTrace {
        &self.restarts[self.best]
    }

    pub fn best_loglik(&self) -> f64 {
        self.chosen().final_loglik()
    }

    /// `iter,loglik,seconds` for the chosen restart.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,loglik,seconds")?;
        let r = self.chosen();
        for (t, (ll, s)) in r.loglik.iter().zip(&r.seconds).enumerate() {
            writeln!(out, "{t},{ll},{s}")?;
        }
        Ok(())
    }
}

/// One EM step: the log-likelihood of the incoming parameters and the
/// updated parameters.
pub(crate) struct Step<P> {
    pub loglik: f64,
    pub next: P,
    pub degenerate: usize,
}

/// A model family trainable by the shared restart driver.
pub(crate) trait EmProblem: Sync {
    type Params: Send;

    fn init(&self, rng: &mut SeededRng) -> Self::Params;

    fn step(&self, params: &Self::Params) -> Step<Self::Params>;
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    let diff = (cur - prev).abs();
    if diff == 0.0 {
        0.0
    } else if prev == 0.0 {
        f64::INFINITY
    } else {
        diff / prev.abs()
    }
}

fn run_restart<P: EmProblem>(
    problem: &P,
    config: &TrainConfig,
    restart: usize,
) -> (P::Params, RestartTrace) {
    let seed = config.seed.wrapping_add(restart as u64);
    let mut rng = seeded(seed);
    let mut params = problem.init(&mut rng);
    let mut trace = RestartTrace {
        restart,
        seed,
        loglik: Vec::new(),
        seconds: Vec::new(),
        iterations: 0,
        converged: false,
        degenerate: 0,
    };
    for t in 0..=config.max_iters {
        let start = Instant::now();
        let step = problem.step(&params);
        trace.loglik.push(step.loglik);
        if t > 0 && relative_change(trace.loglik[t - 1], step.loglik) < config.rel_tol {
            trace.converged = true;
            trace.seconds.push(start.elapsed().as_secs_f64());
            break;
        }
        if t == config.max_iters {
            trace.seconds.push(start.elapsed().as_secs_f64());
            break;
        }
        params = step.next;
        trace.degenerate += step.degenerate;
        trace.iterations += 1;
        trace.seconds.push(start.elapsed().as_secs_f64());
    }
    (params, trace)
}

/// Runs all restarts (in parallel) and keeps the highest final likelihood;
/// ties go to the lowest restart index.
pub(crate) fn run_restarts<P: EmProblem>(
    problem: &P,
    config: &TrainConfig,
) -> (P::Params, TrainTrace) {
    let runs: Vec<(P::Params, RestartTrace)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(problem, config, r))
        .collect();
    let mut best = 0;
    for (k, (_, trace)) in runs.iter().enumerate() {
        if trace.final_loglik() > runs[best].1.final_loglik() {
            best = k;
        }
    }
    let mut params = None;
    let mut traces = Vec::with_capacity(runs.len());
    for (k, (p, trace)) in runs.into_iter().enumerate() {
        if k == best {
            params = Some(p);
        }
        traces.push(trace);
    }
    (
        params.expect("best restart exists"),
        TrainTrace {
            restarts: traces,
            best,
        },
    )
}

/// Responsibilities `omega_ijx(k, l)` for every unique triplet, `T x T`
/// row-major per triplet, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    clusters: usize,
    values: Vec<f64>,
    /// Triplets whose normalizer vanished and got uniform responsibilities.
    pub degenerate: usize,
}

impl Responsibilities {
    pub fn n_clusters(&self) -> usize {
        self.clusters
    }

    pub fn for_triplet(&self, index: usize) -> &[f64] {
        let t2 = self.clusters * self.clusters;
        &self.values[index * t2..(index + 1) * t2]
    }

    pub fn len(&self) -> usize {
        self.values.len() / (self.clusters * self.clusters)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Writes `theta_ik theta_jl p_kl(x)` into `out` and normalizes it in place.
/// Returns the normalizer and whether it vanished.
#[inline]
fn responsibilities_into(
    theta: &[f64],
    p: &[f64],
    clusters: usize,
    n_outputs: usize,
    (i, j, x): (usize, usize, usize),
    out: &mut [f64],
) -> (f64, bool) {
    let ti = &theta[i * clusters..(i + 1) * clusters];
    let tj = &theta[j * clusters..(j + 1) * clusters];
    let mut norm = 0.0;
    for (k, &a) in ti.iter().enumerate() {
        for (l, &b) in tj.iter().enumerate() {
            let v = a * b * p[(k * clusters + l) * n_outputs + x];
            out[k * clusters + l] = v;
            norm += v;
        }
    }
    if norm > 0.0 && norm.is_finite() {
        out.iter_mut().for_each(|v| *v /= norm);
        (norm, false)
    } else {
        let u = 1.0 / (clusters * clusters) as f64;
        out.iter_mut().for_each(|v| *v = u);
        (norm, true)
    }
}

/// E-step: posterior over cluster pairs for each unique triplet.
pub fn e_step(model: &ImmsbmModel, data: &TripletDataset) -> Result<Responsibilities> {
    model.check_compatible(data)?;
    let t = model.n_clusters();
    let t2 = t * t;
    let mut values = vec![0.0; data.n_unique() * t2];
    let mut degenerate = 0;
    for (n, tr) in data.triplets().iter().enumerate() {
        let (_, degen) = responsibilities_into(
            model.theta(),
            model.p(),
            t,
            model.n_outputs(),
            (tr.i, tr.j, tr.x),
            &mut values[n * t2..(n + 1) * t2],
        );
        degenerate += degen as usize;
    }
    Ok(Responsibilities {
        clusters: t,
        values,
        degenerate,
    })
}

fn check_omega(data: &TripletDataset, omega: &Responsibilities) -> Result<()> {
    if omega.len() != data.n_unique() {
        return Err(Error::DimensionMismatch(format!(
            "{} responsibility blocks for {} triplets",
            omega.len(),
            data.n_unique()
        )));
    }
    Ok(())
}

/// M-step for memberships:
/// `theta_mn = sum_{(m,j,x)} count * (sum_t omega_mjx(n,t) + omega_jmx(t,n)) / (2 n_m)`.
/// Rows of entities that never appear as inputs keep `previous`.
pub fn m_step_theta(
    data: &TripletDataset,
    omega: &Responsibilities,
    previous: &[f64],
) -> Result<Vec<f64>> {
    check_omega(data, omega)?;
    let t = omega.n_clusters();
    let n_in = data.vocab().n_inputs();
    if previous.len() != n_in * t {
        return Err(Error::DimensionMismatch(format!(
            "previous theta has {} entries, expected {n_in}x{t}",
            previous.len()
        )));
    }
    let mut acc = vec![0.0; n_in * t];
    for (n, tr) in data.triplets().iter().enumerate() {
        let w = omega.for_triplet(n);
        let c = tr.count as f64;
        for k in 0..t {
            for l in 0..t {
                let v = c * w[k * t + l];
                acc[tr.i * t + k] += v;
                acc[tr.j * t + l] += v;
            }
        }
    }
    Ok(finish_theta(acc, &data.input_exposure(), previous, t))
}

fn finish_theta(
    mut acc: Vec<f64>,
    exposure: &[u64],
    previous: &[f64],
    clusters: usize,
) -> Vec<f64> {
    for (m, &n_m) in exposure.iter().enumerate() {
        let row = m * clusters..(m + 1) * clusters;
        if n_m == 0 {
            acc[row.clone()].copy_from_slice(&previous[row]);
        } else {
            let denom = 2.0 * n_m as f64;
            acc[row].iter_mut().for_each(|v| *v /= denom);
        }
    }
    acc
}

/// Result of the `p` update.
#[derive(Debug, Clone, PartialEq)]
pub struct PUpdate {
    /// Symmetrized tensor, `k`-major then `l` then `x`.
    pub p: Vec<f64>,
    /// `max |p_kl(x) - p_lk(x)|` before symmetrization.
    pub drift: f64,
    /// Cluster pairs with zero total responsibility, reset to uniform.
    pub degenerate: usize,
}

/// M-step for the interaction tensor:
/// `p_rs(x) = sum_{(i,j,x)} count * omega_ijx(r,s) / sum_{(i,j,x')} count * omega_ijx'(r,s)`,
/// followed by averaging `p_rs` with `p_sr`.
pub fn m_step_p(data: &TripletDataset, omega: &Responsibilities) -> Result<PUpdate> {
    check_omega(data, omega)?;
    let t = omega.n_clusters();
    let o = data.vocab().n_outputs();
    let mut acc = vec![0.0; t * t * o];
    for (n, tr) in data.triplets().iter().enumerate() {
        let w = omega.for_triplet(n);
        let c = tr.count as f64;
        for kl in 0..t * t {
            acc[kl * o + tr.x] += c * w[kl];
        }
    }
    Ok(finish_p(acc, t, o))
}

fn finish_p(mut acc: Vec<f64>, clusters: usize, n_outputs: usize) -> PUpdate {
    let mut degenerate = 0;
    for fiber in acc.chunks_mut(n_outputs) {
        let denom: f64 = fiber.iter().sum();
        if denom > 0.0 && denom.is_finite() {
            fiber.iter_mut().for_each(|v| *v /= denom);
        } else {
            degenerate += 1;
            fiber.iter_mut().for_each(|v| *v = 1.0 / n_outputs as f64);
        }
    }
    let drift = symmetrize(&mut acc, clusters, n_outputs);
    PUpdate {
        p: acc,
        drift,
        degenerate,
    }
}

/// Replaces `p_kl` and `p_lk` by their average; returns the largest gap seen.
pub(crate) fn symmetrize(p: &mut [f64], clusters: usize, n_outputs: usize) -> f64 {
    let mut drift = 0.0f64;
    for k in 0..clusters {
        for l in k + 1..clusters {
            let a = (k * clusters + l) * n_outputs;
            let b = (l * clusters + k) * n_outputs;
            for x in 0..n_outputs {
                let (u, v) = (p[a + x], p[b + x]);
                drift = drift.max((u - v).abs());
                let mean = 0.5 * (u + v);
                p[a + x] = mean;
                p[b + x] = mean;
            }
        }
    }
    drift
}

/// Sufficient statistics gathered by one fused pass.
struct PassStats {
    theta: Vec<f64>,
    p: Vec<f64>,
    loglik: f64,
    degenerate: usize,
}

pub(crate) struct ImmsbmProblem<'a> {
    data: &'a TripletDataset,
    clusters: usize,
    exposure: Vec<u64>,
}

/// Parameters in flight during training.
pub(crate) struct ImmsbmParams {
    theta: Vec<f64>,
    p: Vec<f64>,
    /// Pre-symmetrization drift of the last `p` update.
    drift: f64,
}

impl<'a> ImmsbmProblem<'a> {
    pub(crate) fn new(data: &'a TripletDataset, clusters: usize) -> Self {
        Self {
            data,
            clusters,
            exposure: data.input_exposure(),
        }
    }

    fn n_inputs(&self) -> usize {
        self.data.vocab().n_inputs()
    }

    fn n_outputs(&self) -> usize {
        self.data.vocab().n_outputs()
    }

    fn pass(&self, theta: &[f64], p: &[f64]) -> PassStats {
        let t = self.clusters;
        let t2 = t * t;
        let (n_in, o) = (self.n_inputs(), self.n_outputs());
        let make = || {
            (
                PassStats {
                    theta: vec![0.0; n_in * t],
                    p: vec![0.0; t2 * o],
                    loglik: 0.0,
                    degenerate: 0,
                },
                vec![0.0; t2],
            )
        };
        let (stats, _) = par::fold_chunks(
            self.data.triplets(),
            make,
            |(acc, omega), tr| {
                let (norm, degen) =
                    responsibilities_into(theta, p, t, o, (tr.i, tr.j, tr.x), omega);
                let c = tr.count as f64;
                acc.loglik += c * floored_ln(norm);
                acc.degenerate += degen as usize;
                for k in 0..t {
                    for l in 0..t {
                        let v = c * omega[k * t + l];
                        acc.theta[tr.i * t + k] += v;
                        acc.theta[tr.j * t + l] += v;
                        acc.p[(k * t + l) * o + tr.x] += v;
                    }
                }
            },
            |(a, _), (b, _)| {
                a.loglik += b.loglik;
                a.degenerate += b.degenerate;
                a.theta.iter_mut().zip(&b.theta).for_each(|(u, v)| *u += v);
                a.p.iter_mut().zip(&b.p).for_each(|(u, v)| *u += v);
            },
        );
        stats
    }

    fn params_from_model(model: &ImmsbmModel) -> ImmsbmParams {
        ImmsbmParams {
            theta: model.theta().to_vec(),
            p: model.p().to_vec(),
            drift: 0.0,
        }
    }

    fn build_model(&self, params: ImmsbmParams) -> Result<ImmsbmModel> {
        ImmsbmModel::from_parts(
            self.data.vocab().clone(),
            self.clusters,
            params.theta,
            params.p,
        )
    }
}

impl EmProblem for ImmsbmProblem<'_> {
    type Params = ImmsbmParams;

    fn init(&self, rng: &mut SeededRng) -> ImmsbmParams {
        let t = self.clusters;
        let o = self.n_outputs();
        let mut theta = vec![0.0; self.n_inputs() * t];
        for (row, &n_m) in theta.chunks_mut(t).zip(&self.exposure) {
            if n_m == 0 {
                row.iter_mut().for_each(|v| *v = 1.0 / t as f64);
            } else {
                fill_flat_dirichlet(rng, row);
            }
        }
        let mut p = vec![0.0; t * t * o];
        for k in 0..t {
            for l in k..t {
                let start = (k * t + l) * o;
                fill_flat_dirichlet(rng, &mut p[start..start + o]);
                if l != k {
                    let mirror = (l * t + k) * o;
                    p.copy_within(start..start + o, mirror);
                }
            }
        }
        ImmsbmParams {
            theta,
            p,
            drift: 0.0,
        }
    }

    fn step(&self, params: &ImmsbmParams) -> Step<ImmsbmParams> {
        let stats = self.pass(&params.theta, &params.p);
        let theta = finish_theta(stats.theta, &self.exposure, &params.theta, self.clusters);
        let update = finish_p(stats.p, self.clusters, self.n_outputs());
        Step {
            loglik: stats.loglik,
            degenerate: stats.degenerate + update.degenerate,
            next: ImmsbmParams {
                theta,
                p: update.p,
                drift: update.drift,
            },
        }
    }
}

fn check_trainable(data: &TripletDataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset has no triplets".into()));
    }
    if !data.is_symmetric() {
        return Err(Error::InvalidArgument(
            "training dataset is not symmetry-closed".into(),
        ));
    }
    Ok(())
}

/// Trains the interacting model, keeping the best of `config.restarts` runs.
pub fn train(data: &TripletDataset, config: &TrainConfig) -> Result<(ImmsbmModel, TrainTrace)> {
    check_trainable(data, config)?;
    let problem = ImmsbmProblem::new(data, config.clusters);
    let (params, trace) = run_restarts(&problem, config);
    let model = problem.build_model(params)?;
    if !trace.best_loglik().is_finite() {
        return Err(Error::Numeric("log-likelihood is not finite".into()));
    }
    Ok((model, trace))
}

/// Outcome of a single fused E+M round applied to an existing model.
#[derive(Debug, Clone)]
pub struct EmRound {
    /// Log-likelihood of the model that went in.
    pub loglik_before: f64,
    pub model: ImmsbmModel,
    /// Largest `|p_kl(x) - p_lk(x)|` produced by the raw update.
    pub p_drift: f64,
    pub degenerate: usize,
}

/// Applies exactly one E+M round to `model` on `data`.
pub fn em_round(model: &ImmsbmModel, data: &TripletDataset) -> Result<EmRound> {
    model.check_compatible(data)?;
    let problem = ImmsbmProblem::new(data, model.n_clusters());
    let step = problem.step(&ImmsbmProblem::params_from_model(model));
    let drift = step.next.drift;
    Ok(EmRound {
        loglik_before: step.loglik,
        model: problem.build_model(step.next)?,
        p_drift: drift,
        degenerate: step.degenerate,
    })
}

/// Number of free parameters used in the AIC.
pub fn free_parameters(
    n_inputs: usize,
    n_outputs: usize,
    clusters: usize,
    count: AicParams,
) -> usize {
    let membership = n_inputs * (clusters - 1);
    let pairs = match count {
        AicParams::Plain => clusters * clusters,
        AicParams::Symmetric => clusters * (clusters + 1) / 2,
    };
    membership + pairs * n_outputs.saturating_sub(1)
}

pub fn aic(free_params: usize, loglik: f64) -> f64 {
    2.0 * free_params as f64 - 2.0 * loglik
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub clusters: usize,
    pub loglik: f64,
    pub free_params: usize,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub rows: Vec<SelectionRow>,
    /// Cluster count with the lowest AIC (smallest `T` on ties).
    pub best_clusters: usize,
}

impl Selection {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "T,loglik,params,aic")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.clusters, r.loglik, r.free_params, r.aic
            )?;
        }
        Ok(())
    }
}

/// Evaluates every candidate with `fit` (returning best log-likelihood and
/// free-parameter count) and picks the AIC minimizer.
pub(crate) fn select_by_aic(
    candidates: &[usize],
    mut fit: impl FnMut(usize) -> Result<(f64, usize)>,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate cluster counts".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for &clusters in candidates {
        let (loglik, free_params) = fit(clusters)?;
        rows.push(SelectionRow {
            clusters,
            loglik,
            free_params,
            aic: aic(free_params, loglik),
        });
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic).then(a.clusters.cmp(&b.clusters)))
        .expect("non-empty");
    Ok(Selection {
        best_clusters: best.clusters,
        rows,
    })
}

/// Sweeps `candidates` and returns the AIC table for the interacting model.
pub fn select_clusters(
    data: &TripletDataset,
    candidates: &[usize],
    config: &TrainConfig,
) -> Result<Selection> {
    select_by_aic(candidates, |clusters| {
        let cfg = TrainConfig {
            clusters,
            ..config.clone()
        };
        let (_, trace) = train(data, &cfg)?;
        let k = free_parameters(
            data.vocab().n_inputs(),
            data.vocab().n_outputs(),
            clusters,
            config.aic_params,
        );
        Ok((trace.best_loglik(), k))
    })
}

/// Cluster counts 5, 10, ..., 50.
pub fn default_candidates() -> Vec<usize> {
    (1..=10).map(|k| 5 * k).collect()
}
