//! Cluster formation scores: Calinski–Harabasz and silhouette.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::models::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SilhouetteVariant {
    /// Mean of per-cluster squared-distance sums, pooled before taking the ratio.
    #[default]
    Pooled,
    /// Conventional mean of per-sample silhouettes with Euclidean distances.
    Standard,
}

/// Per-cluster moments of the listed clusters.
struct Moments {
    n: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    /// Σ |x − x̄_q|² per cluster.
    scatter: Vec<f64>,
}

fn listed_members(matrix: &FeatureMatrix, ids: &[usize]) -> Result<Vec<Vec<usize>>> {
    if ids.len() < 2 {
        return Err(Error::InvalidParameter("need at least two clusters".into()));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("cluster list has duplicates".into()));
    }
    let groups = matrix.cluster_members()?;
    ids.iter()
        .map(|&q| match groups.get(q) {
            Some(g) if !g.is_empty() => Ok(g.clone()),
            _ => Err(Error::InvalidParameter(format!("cluster {q} is empty"))),
        })
        .collect()
}

fn moments(matrix: &FeatureMatrix, groups: &[Vec<usize>]) -> Moments {
    let d = matrix.n_cols();
    let mut n = Vec::new();
    let mut centroids = Vec::new();
    let mut scatter = Vec::new();
    for g in groups {
        let mut c = vec![0.0; d];
        for &i in g {
            for (cj, v) in c.iter_mut().zip(matrix.row(i)) {
                *cj += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= g.len() as f64);
        scatter.push(g.iter().map(|&i| squared_distance(matrix.row(i), &c)).sum());
        n.push(g.len() as f64);
        centroids.push(c);
    }
    Moments { n, centroids, scatter }
}

/// Calinski–Harabasz over the samples of the listed clusters:
/// `(tr B / tr W) · (n − K) / (K − 1)`. Returns `+∞` when `tr W = 0`.
pub fn ch_score(matrix: &FeatureMatrix, ids: &[usize]) -> Result<f64> {
    let groups = listed_members(matrix, ids)?;
    let m = moments(matrix, &groups);
    let k = groups.len() as f64;
    let n: f64 = m.n.iter().sum();
    if n <= k {
        return Err(Error::InvalidParameter(format!("{n} samples for {k} clusters")));
    }
    let d = matrix.n_cols();
    let mean: Vec<f64> = (0..d)
        .map(|j| m.centroids.iter().zip(&m.n).map(|(c, nq)| c[j] * nq).sum::<f64>() / n)
        .collect();
    let trace_b: f64 = m
        .centroids
        .iter()
        .zip(&m.n)
        .map(|(c, nq)| nq * squared_distance(c, &mean))
        .sum();
    let trace_w: f64 = m.scatter.iter().sum();
    if trace_w == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(trace_b / trace_w * (n - k) / (k - 1.0))
}

/// Silhouette over the listed clusters. `Pooled`: per cluster,
/// `a_q = Σ_{i≠j ∈ q} |x_i − x_j|² / n_q` and
/// `b_q = Σ_{i ∈ q, j ∉ q} |x_i − x_j|² / n_q`; then `a`, `b` are their means
/// and the score is `(b − a) / max(a, b)` (0 when both vanish).
pub fn ss_score(matrix: &FeatureMatrix, ids: &[usize], variant: SilhouetteVariant) -> Result<f64> {
    let groups = listed_members(matrix, ids)?;
    match variant {
        SilhouetteVariant::Pooled => Ok(pooled_silhouette(matrix, &groups)),
        SilhouetteVariant::Standard => Ok(standard_silhouette(matrix, &groups)),
    }
}

fn pooled_silhouette(matrix: &FeatureMatrix, groups: &[Vec<usize>]) -> f64 {
    let m = moments(matrix, groups);
    let k = groups.len();
    // Σ_{i∈q, j∈r} |x_i − x_j|² = n_r S_q + n_q S_r + n_q n_r |x̄_q − x̄_r|²
    // and Σ_{i≠j∈q} |x_i − x_j|² = 2 n_q S_q.
    let mut a = 0.0;
    let mut b = 0.0;
    for q in 0..k {
        a += 2.0 * m.scatter[q];
        let mut cross = 0.0;
        for r in (0..k).filter(|&r| r != q) {
            cross += m.n[r] * m.scatter[q]
                + m.n[q] * m.scatter[r]
                + m.n[q] * m.n[r] * squared_distance(&m.centroids[q], &m.centroids[r]);
        }
        b += cross / m.n[q];
    }
    a /= k as f64;
    b /= k as f64;
    let denom = a.max(b);
    if denom == 0.0 {
        0.0
    } else {
        (b - a) / denom
    }
}

fn standard_silhouette(matrix: &FeatureMatrix, groups: &[Vec<usize>]) -> f64 {
    let mut owner = vec![usize::MAX; matrix.n_rows()];
    let mut rows = Vec::new();
    for (q, g) in groups.iter().enumerate() {
        for &i in g {
            owner[i] = q;
            rows.push(i);
        }
    }
    let k = groups.len();
    let per_sample: Vec<f64> = rows
        .par_iter()
        .map(|&i| {
            let mut sums = vec![0.0; k];
            for (r, g) in groups.iter().enumerate() {
                sums[r] = g
                    .iter()
                    .map(|&j| squared_distance(matrix.row(i), matrix.row(j)).sqrt())
                    .sum();
            }
            let q = owner[i];
            let nq = groups[q].len();
            if nq == 1 {
                return 0.0;
            }
            let a = sums[q] / (nq - 1) as f64;
            let b = (0..k)
                .filter(|&r| r != q)
                .map(|r| sums[r] / groups[r].len() as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    per_sample.iter().sum::<f64>() / per_sample.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormationScore {
    pub clusters: Vec<usize>,
    /// `null` in JSON when infinite.
    pub ch: Option<f64>,
    pub ch_infinite: bool,
    pub ss: f64,
    pub variant: SilhouetteVariant,
}

/// CH and SS for every prefix `order[..m]`, `m = 2..=len`.
pub fn formation_prefixes(
    matrix: &FeatureMatrix,
    order: &[usize],
    variant: SilhouetteVariant,
) -> Result<Vec<FormationScore>> {
    (2..=order.len())
        .map(|m| {
            let ids = &order[..m];
            let ch = ch_score(matrix, ids)?;
            Ok(FormationScore {
                clusters: ids.to_vec(),
                ch: ch.is_finite().then_some(ch),
                ch_infinite: ch.is_infinite(),
                ss: ss_score(matrix, ids, variant)?,
                variant,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use rand::Rng as _;

    fn clustered(rows: &[Vec<f64>], q: &[usize]) -> FeatureMatrix {
        FeatureMatrix::from_unnamed_rows(rows, vec![0; rows.len()])
            .unwrap()
            .with_clusters(q.to_vec())
            .unwrap()
    }

    #[test]
    fn ch_four_point_fixture() {
        let m = clustered(
            &[vec![0.0, 0.0], vec![0.0, 2.0], vec![10.0, 0.0], vec![10.0, 2.0]],
            &[0, 0, 1, 1],
        );
        assert!((ch_score(&m, &[0, 1]).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn ch_zero_within_scatter_is_infinite() {
        let m = clustered(&[vec![0.0], vec![0.0], vec![3.0], vec![3.0]], &[0, 0, 1, 1]);
        assert_eq!(ch_score(&m, &[0, 1]).unwrap(), f64::INFINITY);
        let f = formation_prefixes(&m, &[0, 1], SilhouetteVariant::Pooled).unwrap();
        assert!(f[0].ch_infinite && f[0].ch.is_none());
        assert_eq!(f[0].ss, 1.0);
    }

    #[test]
    fn ss_one_dimensional_fixture() {
        let m = clustered(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]], &[0, 0, 1, 1]);
        let s = ss_score(&m, &[0, 1], SilhouetteVariant::Pooled).unwrap();
        assert!((s - 200.0 / 201.0).abs() < 1e-12);
    }

    #[test]
    fn ss_identical_points_is_zero() {
        let m = clustered(&vec![vec![2.0]; 4], &[0, 0, 1, 1]);
        assert_eq!(ss_score(&m, &[0, 1], SilhouetteVariant::Pooled).unwrap(), 0.0);
        assert_eq!(ss_score(&m, &[0, 1], SilhouetteVariant::Standard).unwrap(), 0.0);
    }

    #[test]
    fn pooled_matches_pair_sums() {
        let mut r = rng(5);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.gen(), r.gen(), r.gen()]).collect();
        let q: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let m = clustered(&rows, &q);
        let ids = [2, 0];
        let (mut a, mut b) = (0.0, 0.0);
        for &c in &ids {
            let nq = q.iter().filter(|&&x| x == c).count() as f64;
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in (0..n).filter(|&i| q[i] == c) {
                for j in (0..n).filter(|&j| j != i && ids.contains(&q[j])) {
                    let d = squared_distance(&rows[i], &rows[j]);
                    if q[j] == c {
                        sa += d;
                    } else {
                        sb += d;
                    }
                }
            }
            a += sa / nq;
            b += sb / nq;
        }
        let (a, b) = (a / 2.0, b / 2.0);
        let want = (b - a) / a.max(b);
        let got = ss_score(&m, &ids, SilhouetteVariant::Pooled).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn standard_silhouette_two_points_each() {
        // a = 1 for every sample; b = mean distance to the other pair: 10 (x=0→10,11 gives 10.5;
        // x=1 gives 9.5; symmetric on the other side).
        let m = clustered(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]], &[0, 0, 1, 1]);
        let want = [
            (10.5 - 1.0) / 10.5,
            (9.5 - 1.0) / 9.5,
            (9.5 - 1.0) / 9.5,
            (10.5 - 1.0) / 10.5,
        ];
        let got = ss_score(&m, &[0, 1], SilhouetteVariant::Standard).unwrap();
        assert!((got - want.iter().sum::<f64>() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_lists() {
        let m = clustered(&[vec![0.0], vec![1.0], vec![5.0]], &[0, 0, 2]);
        assert!(ch_score(&m, &[0]).is_err());
        assert!(ch_score(&m, &[0, 1]).is_err());
        assert!(ch_score(&m, &[0, 0]).is_err());
        assert!(ch_score(&m, &[0, 2]).is_ok());
    }
}
