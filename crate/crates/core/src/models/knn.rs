use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 3 }
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` rows of `train` nearest to `query`, nearest first;
/// equal distances are ordered by row index.
pub fn nearest(train: &FeatureMatrix, query: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut cands: Vec<(f64, usize)> = train
        .rows()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .map(|(i, r)| (squared_distance(r, query), i))
        .collect();
    let k = k.min(cands.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, cmp);
        cands.truncate(k);
    }
    cands.sort_unstable_by(cmp);
    cands.into_iter().map(|(_, i)| i).collect()
}

/// Majority label among the `k` nearest training rows for every query row.
pub fn knn_predict(train: &FeatureMatrix, queries: &FeatureMatrix, config: &KnnConfig) -> Result<Vec<u8>> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    if config.k == 0 || config.k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "k = {} must be a positive odd integer",
            config.k
        )));
    }
    if config.k > train.n_rows() {
        return Err(Error::InvalidParameter(format!(
            "k = {} exceeds {} training rows",
            config.k,
            train.n_rows()
        )));
    }
    if queries.n_cols() != train.n_cols() {
        return Err(Error::Dimension("query width differs from training width".into()));
    }
    let labels = train.labels();
    Ok((0..queries.n_rows())
        .into_par_iter()
        .map(|q| {
            let ones = nearest(train, queries.row(q), config.k, None)
                .into_iter()
                .filter(|&i| labels[i] == 1)
                .count();
            u8::from(2 * ones > config.k)
        })
        .collect())
}
