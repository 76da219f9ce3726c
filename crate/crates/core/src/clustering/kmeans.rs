//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::squared_distance;
use crate::seed::{derive_seed, rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            n_init: 10,
            max_iter: 300,
            seed,
        }
    }
}

/// Result of one Lloyd run from one initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub distortion: f64,
    /// Distortion after each assignment step.
    pub history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub distortion: f64,
    pub seed: u64,
}

impl ClusterModel {
    pub fn centroid(&self, q: usize) -> &[f64] {
        &self.centroids[q * self.dim..(q + 1) * self.dim]
    }
}

fn point(data: &[f64], dim: usize, i: usize) -> &[f64] {
    &data[i * dim..(i + 1) * dim]
}

/// k-means++ seeding: first center uniform, then each next center drawn with
/// probability proportional to the squared distance to the nearest chosen one.
pub fn kmeans_pp_init(data: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(point(data, dim, first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(point(data, dim, i), point(data, dim, first)))
        .collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            while nearest[chosen] == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = point(data, dim, pick).to_vec();
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(squared_distance(point(data, dim, i), &c));
        }
        centroids.extend(c);
    }
    centroids
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn assign(data: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let k = centroids.len() / dim;
    data.par_chunks_exact(dim)
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for q in 0..k {
                let d = squared_distance(x, point(centroids, dim, q));
                if d < best.1 {
                    best = (q, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd iterations from the given centroids until the assignment stops
/// changing or `max_iter` assignment steps have run. A cluster left empty is
/// re-seeded at the point farthest from its centroid.
pub fn lloyd(data: &[f64], dim: usize, mut centroids: Vec<f64>, max_iter: usize) -> LloydRun {
    let k = centroids.len() / dim;
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut converged = false;
    let mut dists = Vec::new();
    let mut assignments = Vec::new();
    for _ in 0..max_iter.max(1) {
        (assignments, dists) = assign(data, dim, &centroids);
        history.push(dists.iter().sum());
        if previous.as_ref() == Some(&assignments) {
            converged = true;
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &q) in data.chunks_exact(dim).zip(&assignments) {
            counts[q] += 1;
            for (s, v) in sums[q * dim..(q + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        for q in 0..k {
            let c = &mut centroids[q * dim..(q + 1) * dim];
            if counts[q] > 0 {
                for (cv, s) in c.iter_mut().zip(&sums[q * dim..(q + 1) * dim]) {
                    *cv = s / counts[q] as f64;
                }
            } else {
                let far = (0..dists.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n");
                taken.push(far);
                c.copy_from_slice(point(data, dim, far));
            }
        }
        previous = Some(std::mem::take(&mut assignments));
    }
    if !converged {
        (assignments, dists) = assign(data, dim, &centroids);
    }
    LloydRun {
        centroids,
        assignments,
        distortion: dists.iter().sum(),
        history,
        converged,
    }
}

fn check(data: &[f64], dim: usize, k: usize) -> Result<usize> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Dimension("point buffer is not a whole number of rows".into()));
    }
    let n = data.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds {n} points")));
    }
    Ok(n)
}

/// Every restart of a k-means fit, in restart order. Restart `r` is seeded
/// from `(seed, r)`.
pub fn kmeans_runs(data: &[f64], dim: usize, config: &KMeansConfig) -> Result<Vec<LloydRun>> {
    check(data, dim, config.k)?;
    Ok((0..config.n_init.max(1))
        .map(|r| {
            let mut rng = rng(derive_seed(config.seed, &[r as u64]));
            let init = kmeans_pp_init(data, dim, config.k, &mut rng);
            lloyd(data, dim, init, config.max_iter)
        })
        .collect())
}

/// Best of `n_init` restarts by distortion (earliest restart on ties).
pub fn kmeans(data: &[f64], dim: usize, config: &KMeansConfig) -> Result<ClusterModel> {
    let runs = kmeans_runs(data, dim, config)?;
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.distortion < a.distortion { b } else { a })
        .expect("at least one restart");
    Ok(ClusterModel {
        k: config.k,
        dim,
        centroids: best.centroids,
        assignments: best.assignments,
        distortion: best.distortion,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n_has_zero_distortion() {
        let data = [0.0, 1.0, 5.0, 9.0, 12.0];
        let m = kmeans(&data, 1, &KMeansConfig::new(5, 1)).unwrap();
        assert_eq!(m.distortion, 0.0);
    }

    #[test]
    fn three_blobs() {
        let mut r = rng(3);
        let data: Vec<f64> = (0..90)
            .map(|i| (i % 3) as f64 * 10.0 + r.gen_range(-0.1..0.1))
            .collect();
        let m = kmeans(&data, 1, &KMeansConfig::new(3, 7)).unwrap();
        let mut c = m.centroids.clone();
        c.sort_by(f64::total_cmp);
        for (got, want) in c.iter().zip([0.0, 10.0, 20.0]) {
            assert!((got - want).abs() < 0.2, "{got} vs {want}");
        }
    }

    #[test]
    fn k_larger_than_n_fails() {
        assert!(kmeans(&[1.0, 2.0], 1, &KMeansConfig::new(3, 0)).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Two centroids start on the same far-away spot, so one ends up empty.
        let data = [0.0, 0.1, 0.2, 10.0, 10.1];
        let run = lloyd(&data, 1, vec![100.0, 100.0], 50);
        assert!(run.assignments.contains(&0) && run.assignments.contains(&1));
        assert!(run.distortion < 1.0);
    }

    #[test]
    fn lloyd_history_never_increases() {
        let mut r = rng(9);
        let data: Vec<f64> = (0..400).map(|_| r.gen::<f64>()).collect();
        for run in kmeans_runs(&data, 2, &KMeansConfig::new(6, 4)).unwrap() {
            for w in run.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }
}
