//! Earth-mover distance between binned cluster feature distributions.
//!
//! Values in [0, 1] fall into `H` equal-width bins. Histograms are kept
//! sparse, so the default `H = 10⁶` costs only as much as the number of
//! distinct occupied bins. Cumulative counts stay integral until the final
//! division, which makes the distance exactly symmetric.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const DEFAULT_BINS: usize = 1_000_000;
/// Slack allowed outside [0, 1] before a value counts as unscaled.
pub const SCALE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmdMode {
    /// One histogram over every feature value of every sample in the cluster.
    #[default]
    Pooled,
    /// Mean over features of the single-feature distances.
    PerFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmdConfig {
    pub bins: usize,
    pub mode: EmdMode,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            mode: EmdMode::Pooled,
        }
    }
}

/// Sparse bin counts: `(bin, count)` sorted by bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: usize,
    counts: Vec<(usize, u64)>,
    total: u64,
}

impl Histogram {
    /// Bins `values`; `cluster` only labels the error for out-of-range input.
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I, bins: usize, cluster: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        let mut idx = Vec::new();
        for v in values {
            if !(-SCALE_TOL..=1.0 + SCALE_TOL).contains(&v) {
                return Err(Error::Unscaled { cluster, value: v });
            }
            idx.push(((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1));
        }
        if idx.is_empty() {
            return Err(Error::EmptyInput);
        }
        idx.sort_unstable();
        let mut counts: Vec<(usize, u64)> = Vec::new();
        for b in idx {
            match counts.last_mut() {
                Some((last, c)) if *last == b => *c += 1,
                _ => counts.push((b, 1)),
            }
        }
        let total = counts.iter().map(|c| c.1).sum();
        Ok(Self { bins, counts, total })
    }

    /// Builds from explicit per-bin counts (zero entries allowed).
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let sparse: Vec<(usize, u64)> = counts
            .iter()
            .enumerate()
            .filter(|c| *c.1 > 0)
            .map(|(b, &c)| (b, c))
            .collect();
        if counts.is_empty() || sparse.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            bins: counts.len(),
            total: sparse.iter().map(|c| c.1).sum(),
            counts: sparse,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Normalized mass per bin (dense; for small `H`).
    pub fn masses(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.bins];
        for &(b, c) in &self.counts {
            p[b] = c as f64 / self.total as f64;
        }
        p
    }
}

/// `Σ_{h=1..H} |F_a(h) − F_b(h)| / H`.
pub fn emd_pair(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.bins != b.bins {
        return Err(Error::Dimension(format!("{} bins vs {} bins", a.bins, b.bins)));
    }
    let (na, nb) = (a.total as u128, b.total as u128);
    // Cumulative counts cross-multiplied: F_a − F_b = (ca·nb − cb·na) / (na·nb).
    let (mut ia, mut ib) = (0, 0);
    let (mut ca, mut cb) = (0u128, 0u128);
    let mut acc = 0u128;
    let mut pos = 0usize;
    loop {
        let next = match (a.counts.get(ia), b.counts.get(ib)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => break,
        };
        acc += (next - pos) as u128 * (ca * nb).abs_diff(cb * na);
        while a.counts.get(ia).is_some_and(|x| x.0 == next) {
            ca += a.counts[ia].1 as u128;
            ia += 1;
        }
        while b.counts.get(ib).is_some_and(|y| y.0 == next) {
            cb += b.counts[ib].1 as u128;
            ib += 1;
        }
        pos = next;
    }
    // From the last occupied bin on, both CDFs are 1.
    Ok(acc as f64 / (na * nb) as f64 / a.bins as f64)
}

fn cluster_histograms(
    matrix: &FeatureMatrix,
    groups: &[Vec<usize>],
    config: &EmdConfig,
) -> Result<Vec<Vec<Histogram>>> {
    groups
        .par_iter()
        .enumerate()
        .map(|(q, g)| match config.mode {
            EmdMode::Pooled => Ok(vec![Histogram::from_values(
                g.iter().flat_map(|&i| matrix.row(i).iter().copied()),
                config.bins,
                q,
            )?]),
            EmdMode::PerFeature => (0..matrix.n_cols())
                .map(|j| Histogram::from_values(g.iter().map(|&i| matrix.get(i, j)), config.bins, q))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmdReport {
    pub bins: usize,
    pub mode: EmdMode,
    pub clusters: Vec<usize>,
    /// `raw[q][r]`, computed independently for each ordered pair.
    pub raw: Vec<Vec<f64>>,
    /// `raw` divided by its largest entry (all zero if that is 0).
    pub normalized: Vec<Vec<f64>>,
    /// `max |raw[q][r] − raw[r][q]|`; the distance is symmetric, so this is 0.
    pub max_asymmetry: f64,
}

/// Pairwise distances between all clusters of `matrix`.
pub fn emd_matrix(matrix: &FeatureMatrix, config: &EmdConfig) -> Result<EmdReport> {
    let groups = matrix.cluster_members()?;
    if let Some(q) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(format!("cluster {q} is empty")));
    }
    let hists = cluster_histograms(matrix, &groups, config)?;
    let k = groups.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|q| (0..k).map(move |r| (q, r))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(q, r)| {
            if q == r {
                return Ok(0.0);
            }
            let per: Result<Vec<f64>> = hists[q].iter().zip(&hists[r]).map(|(a, b)| emd_pair(a, b)).collect();
            let per = per?;
            Ok(per.iter().sum::<f64>() / per.len() as f64)
        })
        .collect::<Result<_>>()?;
    let raw: Vec<Vec<f64>> = values.chunks(k).map(<[f64]>::to_vec).collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    let normalized = raw
        .iter()
        .map(|row| row.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect())
        .collect();
    let max_asymmetry = (0..k)
        .flat_map(|q| (0..k).map(move |r| (q, r)))
        .map(|(q, r)| (raw[q][r] - raw[r][q]).abs())
        .fold(0.0, f64::max);
    Ok(EmdReport {
        bins: config.bins,
        mode: config.mode,
        clusters: (0..k).collect(),
        raw,
        normalized,
        max_asymmetry,
    })
}

impl EmdReport {
    /// Long-format heatmap: `from,to,raw,normalized`.
    pub fn write_heatmap_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["from", "to", "raw", "normalized"])?;
        for (q, row) in self.raw.iter().enumerate() {
            for (r, v) in row.iter().enumerate() {
                w.write_record([
                    self.clusters[q].to_string(),
                    self.clusters[r].to_string(),
                    v.to_string(),
                    self.normalized[q][r].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<heatmap>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense reference: explicit CDFs over every bin.
    fn dense(a: &Histogram, b: &Histogram) -> f64 {
        let (pa, pb) = (a.masses(), b.masses());
        let (mut fa, mut fb, mut s) = (0.0, 0.0, 0.0);
        for h in 0..pa.len() {
            fa += pa[h];
            fb += pb[h];
            s += (fa - fb).abs();
        }
        s / pa.len() as f64
    }

    #[test]
    fn point_masses_at_the_ends() {
        for h in [1, 2, 7, 1000] {
            let a = Histogram::from_values([0.0], h, 0).unwrap();
            let b = Histogram::from_values([1.0], h, 1).unwrap();
            let d = emd_pair(&a, &b).unwrap();
            assert!((d - (h - 1) as f64 / h as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn two_bin_fixture() {
        let a = Histogram::from_counts(&[1, 1]).unwrap();
        let b = Histogram::from_counts(&[2, 0]).unwrap();
        assert_eq!(emd_pair(&a, &b).unwrap(), 0.25);
    }

    #[test]
    fn unscaled_values_are_rejected() {
        assert!(matches!(
            Histogram::from_values([0.5, 1.2], 10, 3),
            Err(Error::Unscaled { cluster: 3, .. })
        ));
        assert!(Histogram::from_values([1.0 + 1e-12, -1e-12], 10, 0).is_ok());
    }

    #[test]
    fn matrix_single_cluster_and_normalization() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0, 1.0 - i as f64 / 5.0]).collect();
        let m = FeatureMatrix::from_unnamed_rows(&rows, vec![0; 6]).unwrap();
        let one = emd_matrix(&m.clone().with_clusters(vec![0; 6]).unwrap(), &EmdConfig::default()).unwrap();
        assert_eq!(one.raw, vec![vec![0.0]]);

        let m = m.with_clusters(vec![0, 0, 1, 1, 2, 2]).unwrap();
        for mode in [EmdMode::Pooled, EmdMode::PerFeature] {
            let r = emd_matrix(&m, &EmdConfig { bins: 100, mode }).unwrap();
            assert_eq!(r.max_asymmetry, 0.0);
            let max = r.normalized.iter().flatten().copied().fold(0.0, f64::max);
            assert_eq!(max, 1.0);
            for q in 0..3 {
                assert_eq!(r.normalized[q][q], 0.0);
            }
        }
        // Pooled over both features, every cluster holds mirrored values.
        let pooled = emd_matrix(
            &m,
            &EmdConfig {
                bins: 100,
                mode: EmdMode::Pooled,
            },
        )
        .unwrap();
        let per = emd_matrix(
            &m,
            &EmdConfig {
                bins: 100,
                mode: EmdMode::PerFeature,
            },
        )
        .unwrap();
        assert!(pooled.raw[0][2] < per.raw[0][2]);
    }

    proptest! {
        #[test]
        fn sparse_sweep_matches_dense(
            h in 1usize..60,
            xs in prop::collection::vec(0.0f64..=1.0, 1..30),
            ys in prop::collection::vec(0.0f64..=1.0, 1..30),
        ) {
            let a = Histogram::from_values(xs, h, 0).unwrap();
            let b = Histogram::from_values(ys, h, 1).unwrap();
            let d = emd_pair(&a, &b).unwrap();
            prop_assert!((d - dense(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(d, emd_pair(&b, &a).unwrap());
            prop_assert_eq!(emd_pair(&a, &a).unwrap(), 0.0);
        }
    }
}
