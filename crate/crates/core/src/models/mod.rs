//! Purchase classifiers and their evaluation.

mod evaluation;
mod forest;
mod knn;
mod metrics;
mod tree;

pub use evaluation::{per_cluster_evaluate, ClusterMetrics, ModelSpec, PerClusterReport, SplitSpec, TrainedModel};
pub use forest::{train_forest, ForestConfig, RandomForest};
pub use knn::{knn_predict, nearest, squared_distance, KnnConfig};
pub use metrics::{evaluate, mean_report, ConfusionCounts, MetricsReport, Undefined};
pub use tree::{best_split, gini, train_tree, DecisionTree, Node, SplitCandidate, TreeConfig};
