use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_rows, DecisionTree, TreeConfig};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    /// Fraction of features examined at each split, in (0, 1].
    pub feature_fraction: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeConfig::default(),
            feature_fraction: 0.5,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

/// Bagged trees with per-split feature subsampling. Tree `t` draws from its
/// own stream derived from `(seed, t)`, so results do not depend on thread
/// scheduling.
pub fn train_forest(matrix: &FeatureMatrix, config: &ForestConfig) -> Result<RandomForest> {
    if config.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    if !(config.feature_fraction > 0.0 && config.feature_fraction <= 1.0) {
        return Err(Error::InvalidParameter("feature_fraction must be in (0, 1]".into()));
    }
    if matrix.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = matrix.n_rows();
    let d = matrix.n_cols();
    let per_split = ((config.feature_fraction * d as f64).round() as usize).clamp(1, d);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(config.seed, &[t as u64]);
            let mut rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_rows(matrix, &mut rows, &config.tree, Some(per_split), rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest { trees })
}

impl RandomForest {
    /// Majority vote over trees; a tied vote goes to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.predict_row(row) == 1).count();
        u8::from(2 * ones > self.trees.len())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Vec<u8> {
        matrix.rows().map(|r| self.predict_row(r)).collect()
    }

    /// Mean of per-tree normalized impurity importances, renormalized to sum
    /// to 1. `None` when no tree has a split.
    pub fn importances(&self) -> Option<Vec<f64>> {
        let d = self.trees.first().map_or(0, |t| t.n_features);
        let mut total = vec![0.0; d];
        for tree in &self.trees {
            let raw = tree.raw_importances();
            let sum: f64 = raw.iter().sum();
            if sum > 0.0 {
                for (acc, v) in total.iter_mut().zip(raw) {
                    *acc += v / sum;
                }
            }
        }
        let sum: f64 = total.iter().sum();
        (sum > 0.0).then(|| total.into_iter().map(|v| v / sum).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::train_tree;
    use crate::seed::rng;

    fn noisy(n: usize, seed: u64) -> FeatureMatrix {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| r.gen::<f64>()).collect()).collect();
        let labels = rows
            .iter()
            .map(|x| u8::from(x[0] + 0.3 * r.gen::<f64>() > 0.6))
            .collect();
        FeatureMatrix::from_unnamed_rows(&rows, labels).unwrap()
    }

    #[test]
    fn single_tree_without_bagging_matches_cart() {
        let m = noisy(200, 1);
        let cfg = ForestConfig {
            n_trees: 1,
            feature_fraction: 1.0,
            bootstrap: false,
            ..Default::default()
        };
        let forest = train_forest(&m, &cfg).unwrap();
        let tree = train_tree(&m, &cfg.tree).unwrap();
        assert_eq!(forest.trees[0], tree);
        assert_eq!(forest.predict(&m), tree.predict(&m));
    }

    #[test]
    fn deterministic() {
        let m = noisy(150, 2);
        let cfg = ForestConfig {
            n_trees: 10,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(train_forest(&m, &cfg).unwrap(), train_forest(&m, &cfg).unwrap());
    }

    #[test]
    fn zero_split_forest_has_no_importances() {
        let m = noisy(50, 3);
        let cfg = ForestConfig {
            n_trees: 3,
            tree: TreeConfig {
                max_depth: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(train_forest(&m, &cfg).unwrap().importances().is_none());
    }

    #[test]
    fn rejects_bad_config() {
        let m = noisy(10, 1);
        assert!(train_forest(
            &m,
            &ForestConfig {
                n_trees: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(train_forest(
            &m,
            &ForestConfig {
                feature_fraction: 0.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
