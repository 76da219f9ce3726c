//! Exact t-SNE: dense O(n²) affinities and gradients.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::models::squared_distance;
use crate::seed::rng;

pub const ENTROPY_TOL: f64 = 1e-5;
pub const MAX_BISECTIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    /// Largest input accepted.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            learning_rate: 200.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            max_points: 10_000,
            seed: 0,
        }
    }
}

pub const OUTPUT_DIMS: usize = 2;

/// Row-stochastic conditional affinities `p(j|i)`: a Gaussian kernel per
/// point whose precision is bisected until the row entropy matches
/// `ln(perplexity)`.
pub fn conditional_affinities(data: &[f64], dim: usize, perplexity: f64) -> Vec<f64> {
    let n = data.len() / dim;
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    p.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        let xi = &data[i * dim..(i + 1) * dim];
        let d: Vec<f64> = (0..n)
            .map(|j| squared_distance(xi, &data[j * dim..(j + 1) * dim]))
            .collect();
        let d_min = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        for _ in 0..MAX_BISECTIONS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let shifted = d[j] - d_min;
                let w = (-beta * shifted).exp();
                row[j] = w;
                sum += w;
                weighted += shifted * w;
            }
            let entropy = sum.ln() + beta * weighted / sum;
            for v in row.iter_mut() {
                *v /= sum;
            }
            let gap = entropy - target;
            if gap.abs() < ENTROPY_TOL {
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    });
    p
}

/// Symmetric joint affinities `(p(j|i) + p(i|j)) / 2n`, summing to 1.
pub fn joint_affinities(data: &[f64], dim: usize, perplexity: f64) -> Vec<f64> {
    let n = data.len() / dim;
    let cond = conditional_affinities(data, dim, perplexity);
    let mut p = vec![0.0; n * n];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
        }
    }
    p
}

/// Student-t kernel normalizer `Σ_{k≠l} 1 / (1 + |y_k − y_l|²)`.
fn kernel_total(y: &[f64], n: usize) -> f64 {
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * OUTPUT_DIMS..(i + 1) * OUTPUT_DIMS];
            (0..n)
                .filter(|&j| j != i)
                .map(|j| 1.0 / (1.0 + squared_distance(yi, &y[j * OUTPUT_DIMS..(j + 1) * OUTPUT_DIMS])))
                .sum()
        })
        .collect();
    rows.iter().sum()
}

/// `KL(P ‖ Q)` for the embedding `y` (`n × 2`, row-major).
pub fn kl_divergence(p: &[f64], y: &[f64]) -> f64 {
    let n = y.len() / OUTPUT_DIMS;
    let z = kernel_total(y, n);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i == j || pij <= 0.0 {
                continue;
            }
            let w = 1.0 / (1.0 + squared_distance(&y[i * 2..i * 2 + 2], &y[j * 2..j * 2 + 2]));
            kl += pij * (pij / (w / z)).ln();
        }
    }
    kl
}

/// Gradient of [`kl_divergence`] with respect to `y`:
/// `4 Σ_j (p_ij − q_ij)(y_i − y_j) / (1 + |y_i − y_j|²)`.
pub fn kl_gradient(p: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len() / OUTPUT_DIMS;
    let z = kernel_total(y, n);
    let mut grad = vec![0.0; n * OUTPUT_DIMS];
    grad.par_chunks_mut(OUTPUT_DIMS).enumerate().for_each(|(i, g)| {
        let yi = &y[i * 2..i * 2 + 2];
        for j in 0..n {
            if j == i {
                continue;
            }
            let yj = &y[j * 2..j * 2 + 2];
            let w = 1.0 / (1.0 + squared_distance(yi, yj));
            let coef = 4.0 * (p[i * n + j] - w / z) * w;
            g[0] += coef * (yi[0] - yj[0]);
            g[1] += coef * (yi[1] - yj[1]);
        }
    });
    grad
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    /// `n × 2`, row-major.
    pub coords: Vec<f64>,
    pub kl: f64,
}

impl Embedding {
    /// Embedding as a two-column matrix carrying the source labels and clusters.
    pub fn to_matrix(&self, source: &FeatureMatrix) -> FeatureMatrix {
        let m = FeatureMatrix::new(
            vec!["x".into(), "y".into()],
            self.coords.clone(),
            source.labels().to_vec(),
        )
        .expect("one 2-d point per source row");
        match source.clusters() {
            Some(q) => m.with_clusters(q.to_vec()).expect("same length"),
            None => m,
        }
    }
}

/// Embeds the rows of `matrix` in the plane.
pub fn tsne_embed(matrix: &FeatureMatrix, config: &TsneConfig) -> Result<Embedding> {
    let n = matrix.n_rows();
    if n > config.max_points {
        return Err(Error::InvalidParameter(format!(
            "{n} points exceed the exact t-SNE cap of {}",
            config.max_points
        )));
    }
    if !(config.perplexity > 0.0) || 4.0 * config.perplexity >= n as f64 {
        return Err(Error::InvalidParameter(format!(
            "perplexity {} needs more than {} points (have {n})",
            config.perplexity,
            4.0 * config.perplexity
        )));
    }
    if config.iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    let mut p = joint_affinities(matrix.values(), matrix.n_cols(), config.perplexity);
    for v in &mut p {
        *v = f64::max(*v, 1e-12);
    }
    let mut r = rng(config.seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid sigma");
    let mut y: Vec<f64> = (0..n * OUTPUT_DIMS).map(|_| normal.sample(&mut r)).collect();
    let mut update = vec![0.0; y.len()];
    let mut gains = vec![1.0_f64; y.len()];

    let exaggerate = |p: &mut [f64], factor: f64| p.iter_mut().for_each(|v| *v *= factor);
    exaggerate(&mut p, config.early_exaggeration);
    for it in 0..config.iterations {
        if it == config.exaggeration_iters {
            exaggerate(&mut p, 1.0 / config.early_exaggeration);
        }
        let momentum = if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let grad = kl_gradient(&p, &y);
        for k in 0..y.len() {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - config.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        for d in 0..OUTPUT_DIMS {
            let mean = (0..n).map(|i| y[i * OUTPUT_DIMS + d]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[i * OUTPUT_DIMS + d] -= mean;
            }
        }
    }
    if config.iterations <= config.exaggeration_iters {
        exaggerate(&mut p, 1.0 / config.early_exaggeration);
    }
    let kl = kl_divergence(&p, &y);
    Ok(Embedding { coords: y, kl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn affinities_are_normalized() {
        let mut r = rng(1);
        let data: Vec<f64> = (0..40 * 3).map(|_| r.gen::<f64>()).collect();
        let cond = conditional_affinities(&data, 3, 5.0);
        for i in 0..40 {
            let s: f64 = cond[i * 40..(i + 1) * 40].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            let h: f64 = -cond[i * 40..(i + 1) * 40]
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|v| v * v.ln())
                .sum::<f64>();
            assert!((h - 5f64.ln()).abs() < 1e-4);
        }
        let p = joint_affinities(&data, 3, 5.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(p[i * 40 + j], p[j * 40 + i]);
            }
        }
    }

    #[test]
    fn rejects_small_inputs() {
        let m = FeatureMatrix::from_unnamed_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0; 3]).unwrap();
        assert!(tsne_embed(&m, &TsneConfig::default()).is_err());
        let cfg = TsneConfig {
            perplexity: 0.5,
            max_points: 2,
            ..Default::default()
        };
        assert!(tsne_embed(&m, &cfg).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(2);
        let data: Vec<f64> = (0..12 * 3).map(|_| r.gen::<f64>()).collect();
        let p = joint_affinities(&data, 3, 3.0);
        let y: Vec<f64> = (0..12 * 2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = kl_gradient(&p, &y);
        let h = 1e-6;
        for k in 0..y.len() {
            let (mut up, mut down) = (y.clone(), y.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (kl_divergence(&p, &up) - kl_divergence(&p, &down)) / (2.0 * h);
            let rel = (fd - g[k]).abs() / g[k].abs().max(1e-8);
            assert!(rel < 1e-4, "coord {k}: analytic {} vs numeric {fd}", g[k]);
        }
    }

    #[test]
    fn separates_two_blobs_deterministically() {
        let mut rows = Vec::new();
        for c in 0..2 {
            for i in 0..5 {
                rows.push(vec![c as f64 * 10.0 + 0.1 * i as f64, 0.05 * i as f64]);
            }
        }
        let m = FeatureMatrix::from_unnamed_rows(&rows, vec![0; 10]).unwrap();
        let cfg = TsneConfig {
            perplexity: 2.0,
            seed: 4,
            ..Default::default()
        };
        let e = tsne_embed(&m, &cfg).unwrap();
        assert_eq!(e, tsne_embed(&m, &cfg).unwrap());
        let pt = |i: usize| &e.coords[i * 2..i * 2 + 2];
        let mut within: f64 = 0.0;
        let mut between = f64::INFINITY;
        for i in 0..10 {
            for j in i + 1..10 {
                let d = squared_distance(pt(i), pt(j));
                if i / 5 == j / 5 {
                    within = within.max(d);
                } else {
                    between = between.min(d);
                }
            }
        }
        assert!(between > within, "between {between} within {within}");
    }
}
