//! How much interactions move output probabilities away from virality, which
//! cluster pairs do the moving, and how concentrated memberships are.

use std::io::Write;

use serde::Serialize;

use crate::dataset::TripletDataset;
use crate::error::{Error, Result};
use crate::model::ImmsbmModel;

/// Triplets whose virality `P_ii(x)` falls below this are left out of V-bar.
pub const VIRALITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VBar {
    /// Count-weighted mean of `|P_ii(x) - P_ij(x)| / P_ii(x)`.
    pub value: f64,
    /// Weight of triplets excluded for vanishing virality.
    pub skipped_weight: u64,
}

pub fn v_bar(model: &ImmsbmModel, data: &TripletDataset) -> Result<VBar> {
    model.check_compatible(data)?;
    let mut sum = 0.0;
    let mut weight = 0u64;
    let mut skipped_weight = 0u64;
    for t in data.triplets() {
        let viral = model.pair_probability(t.i, t.i, t.x);
        if viral < VIRALITY_FLOOR {
            skipped_weight += t.count;
            continue;
        }
        let joint = model.pair_probability(t.i, t.j, t.x);
        sum += t.count as f64 * (viral - joint).abs() / viral;
        weight += t.count;
    }
    Ok(VBar {
        value: if weight == 0 {
            0.0
        } else {
            sum / weight as f64
        },
        skipped_weight,
    })
}

/// `[T x T]` row-major matrix of membership-weighted mean changes
/// `p_kl(x) - P_ii(x)`.
pub fn v_matrix(model: &ImmsbmModel, data: &TripletDataset) -> Result<Vec<f64>> {
    model.check_compatible(data)?;
    let t = model.n_clusters();
    let mut num = vec![0.0; t * t];
    let mut den = vec![0.0; t * t];
    for tr in data.triplets() {
        let viral = model.pair_probability(tr.i, tr.i, tr.x);
        let c = tr.count as f64;
        let (ti, tj) = (model.theta_row(tr.i), model.theta_row(tr.j));
        for k in 0..t {
            for l in 0..t {
                let w = c * ti[k] * tj[l];
                num[k * t + l] += w * (model.fiber(k, l)[tr.x] - viral);
                den[k * t + l] += w;
            }
        }
    }
    Ok(num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d > VIRALITY_FLOOR { n / d } else { 0.0 })
        .collect())
}

/// Normalized Shannon entropy of one membership row, in `[0, 1]`.
///
/// Written as `1 - sum v log2(v T) / log2 T`, which equals the usual
/// `-sum v log2 v / log2 T` on a simplex but is exact at both ends: a uniform
/// row has `v T = 1` and a one-hot row contributes exactly `log2 T`.
pub fn row_entropy(row: &[f64]) -> f64 {
    let t = row.len() as f64;
    if row.len() <= 1 {
        return 0.0;
    }
    let excess: f64 = row
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * (v * t).log2())
        .sum();
    (1.0 - excess / t.log2()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipEntropy {
    pub per_entity: Vec<f64>,
    pub mean: f64,
}

pub fn membership_entropy(model: &ImmsbmModel) -> MembershipEntropy {
    let per_entity: Vec<f64> = (0..model.n_inputs())
        .map(|i| row_entropy(model.theta_row(i)))
        .collect();
    let mean = if per_entity.is_empty() {
        0.0
    } else {
        per_entity.iter().sum::<f64>() / per_entity.len() as f64
    };
    MembershipEntropy { per_entity, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterMember {
    pub label: String,
    pub membership: f64,
}

/// For each cluster, the entities whose membership exceeds `threshold`,
/// strongest first, truncated to `top_n` when given.
pub fn cluster_report(
    model: &ImmsbmModel,
    threshold: f64,
    top_n: Option<usize>,
) -> Vec<Vec<ClusterMember>> {
    let labels = model.vocab().inputs.labels();
    (0..model.n_clusters())
        .map(|k| {
            let mut members: Vec<ClusterMember> = (0..model.n_inputs())
                .filter_map(|i| {
                    let m = model.theta_row(i)[k];
                    (m > threshold).then(|| ClusterMember {
                        label: labels[i].clone(),
                        membership: m,
                    })
                })
                .collect();
            members.sort_by(|a, b| {
                b.membership
                    .total_cmp(&a.membership)
                    .then_with(|| a.label.cmp(&b.label))
            });
            if let Some(n) = top_n {
                members.truncate(n);
            }
            members
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityEntropy {
    pub label: String,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionReport {
    pub clusters: usize,
    pub v_bar: f64,
    /// `1 + V-bar`: the factor by which interactions scale output probabilities.
    pub interaction_factor: f64,
    pub skipped_weight: u64,
    /// Row-major `[T x T]`.
    pub v_matrix: Vec<f64>,
    pub entropies: Vec<EntityEntropy>,
    pub mean_entropy: f64,
}

impl InteractionReport {
    /// `k,l,value`.
    pub fn write_v_matrix_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,l,value")?;
        let t = self.clusters;
        for k in 0..t {
            for l in 0..t {
                writeln!(out, "{k},{l},{}", self.v_matrix[k * t + l])?;
            }
        }
        Ok(())
    }
}

pub fn interaction_report(model: &ImmsbmModel, data: &TripletDataset) -> Result<InteractionReport> {
    let vb = v_bar(model, data)?;
    let vm = v_matrix(model, data)?;
    if vm.iter().any(|v| !v.is_finite()) || !vb.value.is_finite() {
        return Err(Error::Numeric("interaction measures are not finite".into()));
    }
    let ent = membership_entropy(model);
    let labels = model.vocab().inputs.labels();
    Ok(InteractionReport {
        clusters: model.n_clusters(),
        v_bar: vb.value,
        interaction_factor: 1.0 + vb.value,
        skipped_weight: vb.skipped_weight,
        v_matrix: vm,
        entropies: labels
            .iter()
            .zip(&ent.per_entity)
            .map(|(l, &e)| EntityEntropy {
                label: l.clone(),
                entropy: e,
            })
            .collect(),
        mean_entropy: ent.mean,
    })
}

/// Plain-text listing of `cluster_report`.
pub fn write_cluster_report<W: Write>(
    clusters: &[Vec<ClusterMember>],
    threshold: f64,
    mut out: W,
) -> Result<()> {
    writeln!(out, "# entities with membership above {threshold}")?;
    for (k, members) in clusters.iter().enumerate() {
        writeln!(out, "cluster {k} ({} entities)", members.len())?;
        for m in members {
            writeln!(out, "  {:.4}\t{}", m.membership, m.label)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TripletCounts;
    use crate::vocab::Vocabulary;

    fn dataset(vocab: Vocabulary, entries: &[((usize, usize, usize), u64)]) -> TripletDataset {
        let counts: TripletCounts = entries.iter().copied().collect();
        TripletDataset::from_counts_closing(vocab, counts)
            .unwrap()
            .0
    }

    fn two_cluster_model() -> ImmsbmModel {
        let theta = vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        let p = vec![0.8, 0.2, 0.1, 0.9, 0.1, 0.9, 0.6, 0.4];
        ImmsbmModel::new(Vocabulary::numbered(3, 2), 2, theta, p).unwrap()
    }

    #[test]
    fn constant_fibers_have_no_interaction() {
        let p = [0.3, 0.7].repeat(4);
        let m =
            ImmsbmModel::new(Vocabulary::numbered(2, 2), 2, vec![0.2, 0.8, 0.9, 0.1], p).unwrap();
        let data = dataset(
            Vocabulary::numbered(2, 2),
            &[((0, 1, 0), 2), ((0, 1, 1), 1), ((1, 1, 0), 1)],
        );
        assert!(v_bar(&m, &data).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn diagonal_triplets_have_no_interaction() {
        let m = two_cluster_model();
        let data = dataset(
            Vocabulary::numbered(3, 2),
            &[((0, 0, 0), 2), ((2, 2, 1), 1)],
        );
        assert_eq!(v_bar(&m, &data).unwrap().value, 0.0);
    }

    #[test]
    fn v_bar_by_hand() {
        let m = two_cluster_model();
        // (0,1,0) and (1,0,0), one each.
        let data = dataset(Vocabulary::numbered(3, 2), &[((0, 1, 0), 1)]);
        // P_00(0) = 0.8, P_01(0) = 0.1: |0.8-0.1|/0.8
        // P_11(0) = 0.6, P_10(0) = 0.1: |0.6-0.1|/0.6
        let want = (0.7 / 0.8 + 0.5 / 0.6) / 2.0;
        assert!((v_bar(&m, &data).unwrap().value - want).abs() < 1e-15);
    }

    #[test]
    fn vanishing_virality_skipped() {
        let p = vec![1.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0, 1.0];
        let m =
            ImmsbmModel::new(Vocabulary::numbered(2, 2), 2, vec![1.0, 0.0, 0.0, 1.0], p).unwrap();
        let data = dataset(Vocabulary::numbered(2, 2), &[((0, 1, 1), 1)]);
        let vb = v_bar(&m, &data).unwrap();
        // (0,1,1): P_00(1) = 0 -> skipped; (1,0,1): P_11(1) = 1, P_10(1) = 0.5
        assert_eq!(vb.skipped_weight, 1);
        assert!((vb.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn v_matrix_single_cluster_is_zero() {
        let m = ImmsbmModel::new(
            Vocabulary::numbered(2, 2),
            1,
            vec![1.0, 1.0],
            vec![0.4, 0.6],
        )
        .unwrap();
        let data = dataset(
            Vocabulary::numbered(2, 2),
            &[((0, 1, 0), 3), ((1, 1, 1), 2)],
        );
        assert_eq!(v_matrix(&m, &data).unwrap(), vec![0.0]);
    }

    #[test]
    fn v_matrix_by_hand() {
        let m = two_cluster_model();
        // triplets (0,1,0) and (1,0,0): entity 0 in cluster 0, entity 1 in cluster 1.
        let data = dataset(Vocabulary::numbered(3, 2), &[((0, 1, 0), 1)]);
        let v = v_matrix(&m, &data).unwrap();
        // (0,1): only (0,1,0): p_01(0) - P_00(0) = 0.1 - 0.8
        // (1,0): only (1,0,0): p_10(0) - P_11(0) = 0.1 - 0.6
        assert!((v[1] - (0.1 - 0.8)).abs() < 1e-15);
        assert!((v[2] - (0.1 - 0.6)).abs() < 1e-15);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn entropy_anchors() {
        assert_eq!(row_entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert_eq!(row_entropy(&[0.25; 4]), 1.0);
        assert!((row_entropy(&[0.5, 0.5, 0.0, 0.0]) - 0.5).abs() < 1e-12);
        assert_eq!(row_entropy(&[1.0]), 0.0);
    }

    #[test]
    fn cluster_lists() {
        let m = two_cluster_model();
        let r = cluster_report(&m, 0.5, None);
        assert_eq!(r[0].len(), 1);
        assert_eq!(r[0][0].label, "i0");
        assert_eq!(r[1][0].label, "i1");
        let all = cluster_report(&m, 0.4, None);
        assert_eq!(
            all[0].iter().map(|c| c.label.as_str()).collect::<Vec<_>>(),
            vec!["i0", "i2"]
        );
        assert_eq!(cluster_report(&m, 0.4, Some(1))[0].len(), 1);
        assert!(cluster_report(&m, 1.01, None).iter().all(Vec::is_empty));
    }

    #[test]
    fn report_serializes() {
        let m = two_cluster_model();
        let data = dataset(
            Vocabulary::numbered(3, 2),
            &[((0, 1, 0), 1), ((2, 2, 1), 1)],
        );
        let r = interaction_report(&m, &data).unwrap();
        assert_eq!(r.interaction_factor, 1.0 + r.v_bar);
        let mut csv = Vec::new();
        r.write_v_matrix_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
        assert!(serde_json::to_string(&r).unwrap().contains("\"v_bar\""));
    }
}
