//! Choosing K from the distortion-vs-K curve.

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, ClusterModel, KMeansConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ElbowConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 10,
            n_init: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElbowResult {
    pub chosen_k: usize,
    pub curve: Vec<CurvePoint>,
    /// Distance of the knee from the chord, in unit-normalized coordinates.
    pub knee_strength: f64,
    /// The knee sits within 1% of the K range of the chord in raw
    /// (K, distortion) units, i.e. the curve is close to flat.
    pub low_confidence: bool,
    /// Whether the distortion curve came out non-increasing in K.
    pub monotone: bool,
    #[serde(skip)]
    pub models: Vec<ClusterModel>,
}

impl ElbowResult {
    pub fn model_for(&self, k: usize) -> Option<&ClusterModel> {
        self.models.iter().find(|m| m.k == k)
    }
}

const MONOTONE_TOL: f64 = 1e-9;
const MAX_DOUBLINGS: usize = 2;

/// Index of the point farthest from the chord joining the first and last
/// points (first index on ties), with that distance. Endpoints score 0.
pub fn knee_index(xs: &[f64], ys: &[f64]) -> (usize, f64) {
    let (x0, y0) = (xs[0], ys[0]);
    let (x1, y1) = (xs[xs.len() - 1], ys[ys.len() - 1]);
    let norm = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    if norm == 0.0 {
        return (0, 0.0);
    }
    let mut best = (0, 0.0);
    for i in 0..xs.len() {
        let d = ((y1 - y0) * xs[i] - (x1 - x0) * ys[i] + x1 * y0 - y1 * x0).abs() / norm;
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

/// Runs k-means for every K in `k_min..=k_max` and picks the knee of the
/// distortion curve after normalizing both axes to [0, 1]. A K whose
/// distortion exceeds the previous K's is refit with doubled restarts.
pub fn elbow_select(data: &[f64], dim: usize, config: &ElbowConfig) -> Result<ElbowResult> {
    let n = data.len().checked_div(dim).unwrap_or(0);
    if config.k_min == 0 || config.k_max > n || config.k_max < config.k_min + 2 {
        return Err(Error::InvalidParameter(format!(
            "K range {}..={} needs at least three values within [1, {n}]",
            config.k_min, config.k_max
        )));
    }
    let fit = |k: usize, n_init: usize| {
        kmeans(
            data,
            dim,
            &KMeansConfig {
                k,
                n_init,
                max_iter: config.max_iter,
                seed: derive_seed(config.seed, &[k as u64]),
            },
        )
    };
    let mut models: Vec<ClusterModel> = Vec::new();
    let mut monotone = true;
    for k in config.k_min..=config.k_max {
        let mut model = fit(k, config.n_init)?;
        if let Some(prev) = models.last() {
            let limit = prev.distortion * (1.0 + MONOTONE_TOL) + MONOTONE_TOL;
            let mut n_init = config.n_init;
            for _ in 0..MAX_DOUBLINGS {
                if model.distortion <= limit {
                    break;
                }
                n_init *= 2;
                let retry = fit(k, n_init)?;
                if retry.distortion < model.distortion {
                    model = retry;
                }
            }
            monotone &= model.distortion <= limit;
        }
        models.push(model);
    }

    let ks: Vec<f64> = models.iter().map(|m| m.k as f64).collect();
    let ds: Vec<f64> = models.iter().map(|m| m.distortion).collect();
    let (d_first, d_last) = (ds[0], ds[ds.len() - 1]);
    let k_span = (config.k_max - config.k_min) as f64;
    let xs: Vec<f64> = ks.iter().map(|k| (k - ks[0]) / k_span).collect();
    let (knee, strength) = if d_first > d_last {
        let ys: Vec<f64> = ds.iter().map(|d| (d - d_last) / (d_first - d_last)).collect();
        knee_index(&xs, &ys)
    } else {
        (0, 0.0)
    };
    let (_, raw_gap) = knee_index(&ks, &ds);
    Ok(ElbowResult {
        chosen_k: models[knee].k,
        curve: models
            .iter()
            .map(|m| CurvePoint {
                k: m.k,
                distortion: m.distortion,
            })
            .collect(),
        knee_strength: strength,
        low_confidence: raw_gap < 0.01 * k_span,
        monotone,
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use rand::Rng as _;

    fn blobs(centers: &[(f64, f64)], per: usize, spread: f64, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        let mut out = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                out.push(cx + r.gen_range(-spread..spread));
                out.push(cy + r.gen_range(-spread..spread));
            }
        }
        out
    }

    #[test]
    fn knee_of_a_hockey_stick() {
        let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let ys = [1.0, 0.1, 0.05, 0.02, 0.0];
        assert_eq!(knee_index(&xs, &ys).0, 1);
    }

    #[test]
    fn two_blobs_give_two() {
        let data = blobs(&[(0.0, 0.0), (5.0, 5.0)], 40, 0.3, 1);
        let cfg = ElbowConfig {
            k_min: 1,
            k_max: 8,
            seed: 3,
            ..Default::default()
        };
        let r = elbow_select(&data, 2, &cfg).unwrap();
        assert_eq!(r.chosen_k, 2);
        assert!(!r.low_confidence);
        assert!(r.monotone);
    }

    #[test]
    fn tight_blob_is_low_confidence() {
        let data = blobs(&[(0.5, 0.5)], 60, 1e-4, 2);
        let r = elbow_select(
            &data,
            2,
            &ElbowConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.low_confidence);
        let (first, last) = (r.curve[0].distortion, r.curve.last().unwrap().distortion);
        assert!(first - last < 1e-5);
    }

    #[test]
    fn degenerate_range() {
        let data = blobs(&[(0.0, 0.0)], 5, 1.0, 3);
        assert!(elbow_select(
            &data,
            2,
            &ElbowConfig {
                k_min: 2,
                k_max: 3,
                ..Default::default()
            }
        )
        .is_err());
        assert!(elbow_select(
            &data,
            2,
            &ElbowConfig {
                k_min: 2,
                k_max: 6,
                ..Default::default()
            }
        )
        .is_err());
    }
}
