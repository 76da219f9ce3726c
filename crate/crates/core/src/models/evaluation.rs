//! Repeated cluster-stratified train/test evaluation with per-cluster metrics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::forest::{train_forest, ForestConfig, RandomForest};
use super::knn::{knn_predict, KnnConfig};
use super::metrics::{evaluate, mean_report, ConfusionCounts, MetricsReport};
use super::tree::{train_tree, DecisionTree, TreeConfig};
use crate::error::{Error, Result};
use crate::journeys::oversample_balance;
use crate::matrix::FeatureMatrix;
use crate::seed::{derive_seed, derived_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Tree(TreeConfig),
    Forest(ForestConfig),
    Knn(KnnConfig),
}

/// A fitted model of any supported kind.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Tree(DecisionTree),
    Forest(RandomForest),
    Knn { train: FeatureMatrix, config: KnnConfig },
}

impl ModelSpec {
    /// Fits on `matrix`; `seed` overrides the configured seed.
    pub fn fit(&self, matrix: &FeatureMatrix, seed: u64) -> Result<TrainedModel> {
        Ok(match *self {
            ModelSpec::Tree(cfg) => TrainedModel::Tree(train_tree(matrix, &TreeConfig { seed, ..cfg })?),
            ModelSpec::Forest(cfg) => TrainedModel::Forest(train_forest(matrix, &ForestConfig { seed, ..cfg })?),
            ModelSpec::Knn(config) => {
                if matrix.is_empty() {
                    return Err(Error::EmptyInput);
                }
                TrainedModel::Knn {
                    train: matrix.clone(),
                    config,
                }
            }
        })
    }
}

impl TrainedModel {
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        match self {
            TrainedModel::Tree(t) => Ok(t.predict(matrix)),
            TrainedModel::Forest(f) => Ok(f.predict(matrix)),
            TrainedModel::Knn { train, config } => knn_predict(train, matrix, config),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub repeats: usize,
    /// Balance classes in each training split by duplicating minority rows.
    pub oversample: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            repeats: 25,
            oversample: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterMetrics {
    pub cluster: usize,
    pub n: usize,
    /// Mean over repeats; zeroed when `skipped`.
    pub metrics: MetricsReport,
    /// Summed over repeats.
    pub counts: ConfusionCounts,
    /// Fewer than two samples, so no test split was possible.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerClusterReport {
    pub repeats: usize,
    pub clusters: Vec<ClusterMetrics>,
    pub overall: MetricsReport,
    pub overall_counts: ConfusionCounts,
}

/// Trains `model` on a cluster-stratified split and scores every cluster's
/// test rows, averaging over `split.repeats` seeded splits.
pub fn per_cluster_evaluate(matrix: &FeatureMatrix, model: &ModelSpec, split: &SplitSpec) -> Result<PerClusterReport> {
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) || split.repeats == 0 {
        return Err(Error::InvalidParameter(
            "train fraction must be in (0, 1) and repeats ≥ 1".into(),
        ));
    }
    let groups = matrix.cluster_members()?;
    let k = groups.len();
    let mut per_cluster: Vec<Vec<MetricsReport>> = vec![Vec::new(); k];
    let mut counts = vec![ConfusionCounts::default(); k];
    let mut overall = Vec::with_capacity(split.repeats);
    let mut overall_counts = ConfusionCounts::default();

    for run in 0..split.repeats {
        let mut train_idx = Vec::new();
        let mut test_idx: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (q, members) in groups.iter().enumerate() {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut derived_rng(split.seed, &[run as u64, q as u64]));
            if shuffled.len() < 2 {
                train_idx.extend(shuffled);
                continue;
            }
            let n_train =
                ((split.train_fraction * shuffled.len() as f64).round() as usize).clamp(1, shuffled.len() - 1);
            test_idx[q] = shuffled.split_off(n_train);
            train_idx.extend(shuffled);
        }
        train_idx.sort_unstable();
        let mut train = matrix.select_rows(&train_idx);
        let run_seed = derive_seed(split.seed, &[run as u64, u64::MAX]);
        if split.oversample {
            let [n0, n1] = train.class_counts();
            if n0 > 0 && n1 > 0 {
                train = oversample_balance(&train, run_seed)?;
            }
        }
        let fitted = model.fit(&train, run_seed)?;

        let all_test: Vec<usize> = test_idx.iter().flatten().copied().collect();
        let test = matrix.select_rows(&all_test);
        let predicted = fitted.predict(&test)?;
        let (c, m) = evaluate(&predicted, test.labels())?;
        overall.push(m);
        overall_counts.add(&c);

        let mut offset = 0;
        for (q, idx) in test_idx.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let truth: Vec<u8> = idx.iter().map(|&i| matrix.labels()[i]).collect();
            let (c, m) = evaluate(&predicted[offset..offset + idx.len()], &truth)?;
            offset += idx.len();
            per_cluster[q].push(m);
            counts[q].add(&c);
        }
    }

    let clusters = (0..k)
        .map(|q| {
            let skipped = groups[q].len() < 2;
            ClusterMetrics {
                cluster: q,
                n: groups[q].len(),
                metrics: if skipped {
                    MetricsReport::default()
                } else {
                    mean_report(&per_cluster[q])
                },
                counts: counts[q],
                skipped,
            }
        })
        .collect();
    Ok(PerClusterReport {
        repeats: split.repeats,
        clusters,
        overall: mean_report(&overall),
        overall_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use rand::Rng as _;

    /// Cluster 0: label = x0 > 0.5 (separable). Cluster 1: labels are coin flips.
    fn two_clusters(n: usize, seed: u64) -> FeatureMatrix {
        let mut r = rng(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut q = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let x0: f64 = r.gen();
            let x1 = c as f64 * 10.0 + r.gen::<f64>();
            rows.push(vec![x0, x1]);
            labels.push(if c == 0 {
                u8::from(x0 > 0.5)
            } else {
                u8::from(r.gen::<bool>())
            });
            q.push(c);
        }
        FeatureMatrix::from_unnamed_rows(&rows, labels)
            .unwrap()
            .with_clusters(q)
            .unwrap()
    }

    #[test]
    fn separable_cluster_scores_higher() {
        let m = two_clusters(400, 7);
        let split = SplitSpec {
            repeats: 5,
            seed: 3,
            ..Default::default()
        };
        let report = per_cluster_evaluate(&m, &ModelSpec::Tree(TreeConfig::default()), &split).unwrap();
        assert!(report.clusters[0].metrics.f1 > report.clusters[1].metrics.f1);
        assert!(report.clusters[0].metrics.f1 > 0.9);
    }

    #[test]
    fn single_cluster_equals_overall() {
        let m = two_clusters(100, 1);
        let m = m.clone().with_clusters(vec![0; m.n_rows()]).unwrap();
        let split = SplitSpec {
            repeats: 3,
            seed: 1,
            ..Default::default()
        };
        let r = per_cluster_evaluate(&m, &ModelSpec::Knn(KnnConfig { k: 3 }), &split).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].metrics, r.overall);
        assert_eq!(r.clusters[0].counts, r.overall_counts);
    }

    #[test]
    fn deterministic_and_flags_tiny_clusters() {
        let base = two_clusters(60, 2);
        let mut q = base.clusters().unwrap().to_vec();
        q[0] = 2;
        let m = base.with_clusters(q).unwrap();
        let split = SplitSpec {
            repeats: 1,
            seed: 9,
            ..Default::default()
        };
        let spec = ModelSpec::Forest(ForestConfig {
            n_trees: 5,
            ..Default::default()
        });
        let a = per_cluster_evaluate(&m, &spec, &split).unwrap();
        let b = per_cluster_evaluate(&m, &spec, &split).unwrap();
        assert_eq!(a, b);
        assert!(a.clusters[2].skipped);
        assert!(!a.clusters[0].skipped);
    }
}
