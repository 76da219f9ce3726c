use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::ingest::apportion;
use crate::matrix::FeatureMatrix;
use crate::seed::rng;

/// Duplicates randomly chosen minority-class rows until both classes have
/// the same count. All original rows are kept, in order, followed by the
/// duplicates.
pub fn oversample_balance(matrix: &FeatureMatrix, seed: u64) -> Result<FeatureMatrix> {
    let [n0, n1] = matrix.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let minority = u8::from(n1 < n0);
    let deficit = n0.abs_diff(n1);
    let pool: Vec<usize> = (0..matrix.n_rows())
        .filter(|&i| matrix.labels()[i] == minority)
        .collect();
    let mut rng = rng(seed);
    let mut idx: Vec<usize> = (0..matrix.n_rows()).collect();
    idx.extend((0..deficit).map(|_| pool[rng.gen_range(0..pool.len())]));
    Ok(matrix.select_rows(&idx))
}

/// Draws `target_n` rows without replacement so that each cluster keeps its
/// share of the rows (largest-remainder rounding, so within one row).
/// Selected rows keep their original relative order.
pub fn stratified_subsample(matrix: &FeatureMatrix, target_n: usize, seed: u64) -> Result<FeatureMatrix> {
    if target_n > matrix.n_rows() {
        return Err(Error::InvalidParameter(format!(
            "target size {target_n} exceeds {} rows",
            matrix.n_rows()
        )));
    }
    let groups = matrix.cluster_members()?;
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let quotas = apportion(target_n, &sizes);
    let mut rng = rng(seed);
    let mut chosen = Vec::with_capacity(target_n);
    for (members, &quota) in groups.iter().zip(&quotas) {
        if quota == members.len() {
            chosen.extend_from_slice(members);
        } else {
            chosen.extend(index::sample(&mut rng, members.len(), quota).iter().map(|k| members[k]));
        }
    }
    chosen.sort_unstable();
    Ok(matrix.select_rows(&chosen))
}

/// Keeps at most `cap` randomly chosen rows of every cluster; smaller
/// clusters are kept whole. Selected rows keep their original order.
pub fn cap_per_cluster(matrix: &FeatureMatrix, cap: usize, seed: u64) -> Result<FeatureMatrix> {
    if cap == 0 {
        return Err(Error::InvalidParameter("cluster cap must be positive".into()));
    }
    let groups = matrix.cluster_members()?;
    let mut chosen = Vec::new();
    for (q, members) in groups.iter().enumerate() {
        if members.len() <= cap {
            chosen.extend_from_slice(members);
        } else {
            let mut rng = rng(crate::seed::derive_seed(seed, &[q as u64]));
            chosen.extend(index::sample(&mut rng, members.len(), cap).iter().map(|k| members[k]));
        }
    }
    chosen.sort_unstable();
    Ok(matrix.select_rows(&chosen))
}

/// `target_n` distinct indices of `0..n`, drawn uniformly and returned sorted.
pub fn sample_indices(n: usize, target_n: usize, seed: u64) -> Result<Vec<usize>> {
    if target_n > n {
        return Err(Error::InvalidParameter(format!(
            "target size {target_n} exceeds {n} rows"
        )));
    }
    let mut chosen = index::sample(&mut rng(seed), n, target_n).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Seeded permutation of `0..n`.
pub(crate) fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed));
    idx
}
