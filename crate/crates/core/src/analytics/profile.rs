//! Cluster composition: share of journeys (Rep) and purchase ratio (PuR).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfileRow {
    pub cluster: usize,
    pub n: usize,
    pub purchasers: usize,
    /// Fraction of all journeys, in [0, 1].
    pub rep: f64,
    /// Fraction of this cluster's journeys that purchased, in [0, 1].
    pub pur: f64,
}

/// One row per non-empty cluster, largest first (lower id on ties).
pub fn cluster_profile(matrix: &FeatureMatrix) -> Result<Vec<ClusterProfileRow>> {
    let groups = matrix.cluster_members()?;
    let n = matrix.n_rows() as f64;
    let mut rows: Vec<ClusterProfileRow> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(q, g)| {
            let purchasers = g.iter().filter(|&&i| matrix.labels()[i] == 1).count();
            ClusterProfileRow {
                cluster: q,
                n: g.len(),
                purchasers,
                rep: g.len() as f64 / n,
                pur: purchasers as f64 / g.len() as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.n.cmp(&a.n).then(a.cluster.cmp(&b.cluster)));
    Ok(rows)
}
