//! Scoring predictors on a held-out triplet set.
//!
//! Every unordered test pair receives a probability for every output; an
//! `(pair, output)` instance is positive when that triplet occurs in the test
//! set. Max-F1 and AUC pool all instances; precision@k is averaged per pair.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TripletDataset;
use crate::error::{Error, Result};
use crate::model::{floored_ln, PairPredictor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredInstance {
    pub i: usize,
    pub j: usize,
    pub x: usize,
    pub probability: f64,
    pub observed: bool,
    /// Occurrences of `(i, j, x)` in the test set.
    pub count: u64,
    /// Occurrences of the pair `(i, j)` over all outputs.
    pub pair_total: u64,
}

impl ScoredInstance {
    /// Share of the pair's test observations that went to this output.
    pub fn observed_frequency(&self) -> f64 {
        if self.pair_total == 0 {
            0.0
        } else {
            self.count as f64 / self.pair_total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scoring {
    pub instances: Vec<ScoredInstance>,
    pub scored_pairs: usize,
    /// Pairs for which the predictor declined to predict.
    pub skipped_pairs: usize,
}

/// Scores every `(unordered test pair, output)` combination.
pub fn score_all<P: PairPredictor + ?Sized>(
    predictor: &P,
    test: &TripletDataset,
) -> Result<Scoring> {
    check_dims(predictor, test)?;
    let v = test.vocab();
    let mut pairs: BTreeMap<(usize, usize), Vec<(usize, u64)>> = BTreeMap::new();
    for t in test.triplets() {
        if t.i <= t.j {
            pairs.entry((t.i, t.j)).or_default().push((t.x, t.count));
        }
    }
    let n_out = v.n_outputs();
    let per_pair: Vec<Option<Vec<ScoredInstance>>> = pairs
        .par_iter()
        .map(|(&(i, j), observed)| {
            let mut probs = vec![0.0; n_out];
            if !predictor.predict_into(i, j, &mut probs) {
                return None;
            }
            let mut counts = vec![0u64; n_out];
            for &(x, c) in observed {
                counts[x] = c;
            }
            let pair_total = counts.iter().sum();
            Some(
                (0..n_out)
                    .map(|x| ScoredInstance {
                        i,
                        j,
                        x,
                        probability: probs[x].clamp(0.0, 1.0),
                        observed: counts[x] > 0,
                        count: counts[x],
                        pair_total,
                    })
                    .collect(),
            )
        })
        .collect();
    let mut scoring = Scoring {
        instances: Vec::new(),
        scored_pairs: 0,
        skipped_pairs: 0,
    };
    for item in per_pair {
        match item {
            Some(mut inst) => {
                scoring.scored_pairs += 1;
                scoring.instances.append(&mut inst);
            }
            None => scoring.skipped_pairs += 1,
        }
    }
    Ok(scoring)
}

/// Count-weighted log-likelihood of a triplet set under any predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictiveLoglik {
    pub loglik: f64,
    /// Weight of triplets whose pair the predictor declined.
    pub skipped_weight: u64,
}

pub fn predictive_log_likelihood<P: PairPredictor + ?Sized>(
    predictor: &P,
    data: &TripletDataset,
) -> Result<PredictiveLoglik> {
    check_dims(predictor, data)?;
    let mut out = PredictiveLoglik {
        loglik: 0.0,
        skipped_weight: 0,
    };
    let mut probs = vec![0.0; data.vocab().n_outputs()];
    let mut current = None;
    let mut covered = false;
    for t in data.triplets() {
        if current != Some((t.i, t.j)) {
            current = Some((t.i, t.j));
            covered = predictor.predict_into(t.i, t.j, &mut probs);
        }
        if covered {
            out.loglik += t.count as f64 * floored_ln(probs[t.x]);
        } else {
            out.skipped_weight += t.count;
        }
    }
    Ok(out)
}

fn check_dims<P: PairPredictor + ?Sized>(predictor: &P, test: &TripletDataset) -> Result<()> {
    let v = test.vocab();
    if predictor.n_inputs() != v.n_inputs() || predictor.n_outputs() != v.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "predictor is {}x{} (inputs x outputs), test set is {}x{}",
            predictor.n_inputs(),
            predictor.n_outputs(),
            v.n_inputs(),
            v.n_outputs()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxF1 {
    pub f1: f64,
    pub threshold: f64,
    /// Set when there is no positive instance; `f1` is then 0.
    pub no_positives: bool,
    /// One point per distinct predicted probability, highest threshold first.
    pub curve: Vec<ThresholdPoint>,
}

fn sorted_desc(instances: &[ScoredInstance]) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = instances
        .iter()
        .map(|s| (s.probability, s.observed))
        .collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Sweeps the threshold down through every distinct probability, predicting
/// "present" for instances at or above it, and keeps the best F1.
pub fn max_f1(instances: &[ScoredInstance]) -> MaxF1 {
    let positives = instances.iter().filter(|s| s.observed).count() as u64;
    let sorted = sorted_desc(instances);
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best = (0.0, f64::NAN);
    let mut k = 0;
    while k < sorted.len() {
        let threshold = sorted[k].0;
        while k < sorted.len() && sorted[k].0 == threshold {
            if sorted[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let fn_ = positives - tp;
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = if positives == 0 {
            0.0
        } else {
            tp as f64 / positives as f64
        };
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        if f1 > best.0 || best.1.is_nan() {
            best = (f1, threshold);
        }
        curve.push(ThresholdPoint {
            threshold,
            precision,
            recall,
            f1,
        });
    }
    MaxF1 {
        f1: best.0,
        threshold: if best.1.is_nan() { 1.0 } else { best.1 },
        no_positives: positives == 0,
        curve,
    }
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. `None` when either class is empty.
pub fn auc_roc(instances: &[ScoredInstance]) -> Option<f64> {
    let mut v: Vec<(f64, bool)> = instances
        .iter()
        .map(|s| (s.probability, s.observed))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut pos, mut neg) = (0u128, 0u128);
    // Twice the win count keeps tie halves integral.
    let mut doubled_wins = 0u128;
    let mut k = 0;
    while k < v.len() {
        let value = v[k].0;
        let (mut gp, mut gn) = (0u128, 0u128);
        while k < v.len() && v[k].0 == value {
            if v[k].1 {
                gp += 1;
            } else {
                gn += 1;
            }
            k += 1;
        }
        doubled_wins += 2 * gp * neg + gp * gn;
        pos += gp;
        neg += gn;
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(doubled_wins as f64 / (2 * pos * neg) as f64)
}

fn by_pair(instances: &[ScoredInstance]) -> BTreeMap<(usize, usize), Vec<&ScoredInstance>> {
    let mut map: BTreeMap<(usize, usize), Vec<&ScoredInstance>> = BTreeMap::new();
    for s in instances {
        map.entry((s.i, s.j)).or_default().push(s);
    }
    map
}

/// AUC computed within each pair and averaged over pairs that have both
/// positive and negative instances.
pub fn auc_roc_per_pair(instances: &[ScoredInstance]) -> Option<f64> {
    let values: Vec<f64> = by_pair(instances)
        .values()
        .filter_map(|group| {
            let owned: Vec<ScoredInstance> = group.iter().map(|s| **s).collect();
            auc_roc(&owned)
        })
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Denominator of per-pair precision@k.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatkDenominator {
    /// Always `k`.
    K,
    /// `min(k, number of observed outputs for the pair)`.
    #[default]
    Min,
}

/// Per pair, the share of the top-`k` outputs (ties broken by output id) that
/// were observed, averaged over pairs with at least one observed output.
pub fn precision_at_k(instances: &[ScoredInstance], k: usize, denominator: PatkDenominator) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for group in by_pair(instances).into_values() {
        let observed = group.iter().filter(|s| s.observed).count();
        if observed == 0 {
            continue;
        }
        let mut ranked = group;
        ranked.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.x.cmp(&b.x)));
        let hits = ranked.iter().take(k).filter(|s| s.observed).count();
        let denom = match denominator {
            PatkDenominator::K => k,
            PatkDenominator::Min => k.min(observed),
        };
        total += hits as f64 / denom as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: f64,
    pub mean_observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    /// Instance-weighted mean of `|mean predicted - mean observed frequency|`
    /// over non-empty bins.
    pub mean_abs_gap: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Equal-width bins on `[0, 1]` over predicted probability, comparing the mean
/// prediction with the mean observed frequency of the binned instances.
pub fn calibration(instances: &[ScoredInstance], bins: usize) -> Result<Calibration> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "calibration needs at least one bin".into(),
        ));
    }
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); bins];
    for s in instances {
        let b = ((s.probability * bins as f64) as usize).min(bins - 1);
        sums[b].0 += 1;
        sums[b].1 += s.probability;
        sums[b].2 += s.observed_frequency();
    }
    let mut weighted = 0.0;
    let mut total = 0usize;
    let table = sums
        .iter()
        .enumerate()
        .map(|(b, &(count, pred, obs))| {
            let (mp, mo) = if count == 0 {
                (0.0, 0.0)
            } else {
                (pred / count as f64, obs / count as f64)
            };
            weighted += count as f64 * (mp - mo).abs();
            total += count;
            CalibrationBin {
                lower: b as f64 / bins as f64,
                upper: (b + 1) as f64 / bins as f64,
                count,
                mean_predicted: mp,
                mean_observed: mo,
            }
        })
        .collect();
    Ok(Calibration {
        mean_abs_gap: if total == 0 {
            0.0
        } else {
            weighted / total as f64
        },
        bins: table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub k: usize,
    pub patk_denominator: PatkDenominator,
    pub calibration_bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 10,
            patk_denominator: PatkDenominator::Min,
            calibration_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub max_f1: f64,
    pub max_f1_threshold: f64,
    /// Pooled AUC; 0.5 when undefined (see `auc_undefined`).
    pub auc_roc: f64,
    pub auc_roc_per_pair: Option<f64>,
    pub precision_at_k: f64,
    pub k: usize,
    pub patk_denominator: PatkDenominator,
    pub calibration_mean_abs_gap: f64,
    pub calibration: Vec<CalibrationBin>,
    pub n_instances: usize,
    pub n_pairs: usize,
    pub skipped_pairs: usize,
    /// Test pairs never observed in the training set, when one was supplied.
    pub unseen_pairs: Option<usize>,
    pub no_positives: bool,
    pub auc_undefined: bool,
    /// Count-weighted log-likelihood of the test triplets.
    pub log_likelihood: f64,
    pub loglik_skipped_weight: u64,
    #[serde(skip)]
    pub threshold_curve: Vec<ThresholdPoint>,
}

impl EvalReport {
    /// `threshold,precision,recall,f1`.
    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "threshold,precision,recall,f1")?;
        for p in &self.threshold_curve {
            writeln!(out, "{},{},{},{}", p.threshold, p.precision, p.recall, p.f1)?;
        }
        Ok(())
    }
}

/// Test pairs (unordered) with no triplet at all in `train`.
pub fn count_unseen_pairs(test: &TripletDataset, train: &TripletDataset) -> usize {
    let seen: BTreeSet<(usize, usize)> = train.triplets().iter().map(|t| (t.i, t.j)).collect();
    let test_pairs: BTreeSet<(usize, usize)> = test
        .triplets()
        .iter()
        .filter(|t| t.i <= t.j)
        .map(|t| (t.i, t.j))
        .collect();
    test_pairs.iter().filter(|p| !seen.contains(p)).count()
}

/// Scores `predictor` on `test` and computes every metric.
pub fn evaluate<P: PairPredictor + ?Sized>(
    predictor: &P,
    test: &TripletDataset,
    train: Option<&TripletDataset>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let scoring = score_all(predictor, test)?;
    let inst = &scoring.instances;
    let f1 = max_f1(inst);
    let auc = auc_roc(inst);
    let cal = calibration(inst, options.calibration_bins)?;
    let ll = predictive_log_likelihood(predictor, test)?;
    Ok(EvalReport {
        max_f1: f1.f1,
        max_f1_threshold: f1.threshold,
        auc_roc: auc.unwrap_or(0.5),
        auc_roc_per_pair: auc_roc_per_pair(inst),
        precision_at_k: precision_at_k(inst, options.k, options.patk_denominator),
        k: options.k,
        patk_denominator: options.patk_denominator,
        calibration_mean_abs_gap: cal.mean_abs_gap,
        calibration: cal.bins,
        n_instances: inst.len(),
        n_pairs: scoring.scored_pairs,
        skipped_pairs: scoring.skipped_pairs,
        unseen_pairs: train.map(|t| count_unseen_pairs(test, t)),
        no_positives: f1.no_positives,
        auc_undefined: auc.is_none(),
        log_likelihood: ll.loglik,
        loglik_skipped_weight: ll.skipped_weight,
        threshold_curve: f1.curve,
    })
}
