//! CART classification tree with Gini impurity.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::seed::{rng, Rng};

/// Gains at or below this are treated as no improvement, and two candidate
/// splits within it of each other as tied.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_leaf: 3,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 || self.min_samples_split == 0 {
            return Err(Error::InvalidParameter(
                "min_samples_leaf and min_samples_split must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: [usize; 2],
        /// Weighted Gini decrease: `n_node / n_root * (gini - children)`.
        gain: f64,
    },
}

impl Node {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => *counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

fn majority(counts: [usize; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Unweighted Gini decrease at the node.
    pub decrease: f64,
}

/// Exhaustive best split of `rows` over `features` (in ascending order):
/// thresholds are midpoints between consecutive distinct values, both sides
/// must keep `min_leaf` rows, ties go to the lowest feature then threshold.
pub fn best_split(
    matrix: &FeatureMatrix,
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    let labels = matrix.labels();
    let mut parent = [0usize; 2];
    for &i in rows {
        parent[usize::from(labels[i])] += 1;
    }
    let parent_gini = gini(parent);
    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &feature in features {
        order.clear();
        order.extend(rows.iter().map(|&i| (matrix.get(i, feature), labels[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for k in 0..n.saturating_sub(1) {
            left[usize::from(order[k].1)] += 1;
            let (lo, hi) = (order[k].0, order[k + 1].0);
            let n_left = k + 1;
            if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let weighted = (n_left as f64 * gini(left) + (n - n_left) as f64 * gini(right)) / n as f64;
            let decrease = parent_gini - weighted;
            if decrease <= GAIN_EPS {
                continue;
            }
            if best.is_none_or(|b| decrease > b.decrease + GAIN_EPS) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

pub(crate) struct Grower<'a> {
    pub matrix: &'a FeatureMatrix,
    pub config: TreeConfig,
    /// Number of features examined per split; all of them when `None`.
    pub features_per_split: Option<usize>,
    pub rng: Rng,
    pub root_size: usize,
    pub nodes: Vec<Node>,
}

impl Grower<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.matrix.n_cols();
        match self.features_per_split {
            Some(m) if m < d => {
                let mut f = index::sample(&mut self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    pub fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let labels = self.matrix.labels();
        let mut counts = [0usize; 2];
        for &i in rows.iter() {
            counts[usize::from(labels[i])] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let n = rows.len();
        let cfg = self.config;
        if depth >= cfg.max_depth
            || n < cfg.min_samples_split
            || n < 2 * cfg.min_samples_leaf
            || counts[0] == 0
            || counts[1] == 0
        {
            return id;
        }
        let features = self.candidate_features();
        let Some(split) = best_split(self.matrix, rows, &features, cfg.min_samples_leaf) else {
            return id;
        };
        let mut boundary = 0;
        for k in 0..n {
            if self.matrix.get(rows[k], split.feature) <= split.threshold {
                rows.swap(k, boundary);
                boundary += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(boundary);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            counts,
            gain: n as f64 / self.root_size as f64 * split.decrease,
        };
        id
    }
}

/// Fits a tree on all rows of `matrix`.
pub fn train_tree(matrix: &FeatureMatrix, config: &TreeConfig) -> Result<DecisionTree> {
    let mut rows: Vec<usize> = (0..matrix.n_rows()).collect();
    fit_rows(matrix, &mut rows, config, None, rng(config.seed))
}

pub(crate) fn fit_rows(
    matrix: &FeatureMatrix,
    rows: &mut [usize],
    config: &TreeConfig,
    features_per_split: Option<usize>,
    rng: Rng,
) -> Result<DecisionTree> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut grower = Grower {
        matrix,
        config: *config,
        features_per_split,
        rng,
        root_size: rows.len(),
        nodes: Vec::new(),
    };
    grower.grow(rows, 0);
    Ok(DecisionTree {
        n_features: matrix.n_cols(),
        nodes: grower.nodes,
    })
}

impl DecisionTree {
    fn leaf_for(&self, row: &[f64]) -> &Node {
        let mut node = &self.nodes[0];
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            node = &self.nodes[if row[*feature] <= *threshold { *left } else { *right }];
        }
        node
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        majority(self.leaf_for(row).counts())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Vec<u8> {
        matrix.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    /// Total weighted Gini decrease per feature (not normalized).
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                imp[*feature] += gain;
            }
        }
        imp
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(xs: &[f64], ys: &[u8]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        FeatureMatrix::from_unnamed_rows(&rows, ys.to_vec()).unwrap()
    }

    #[test]
    fn single_class_is_a_leaf() {
        let t = train_tree(&one_d(&[0.0, 1.0, 2.0, 3.0], &[1, 1, 1, 1]), &TreeConfig::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[10.0]), 1);
    }

    #[test]
    fn separable_one_d() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<u8> = xs.iter().map(|&x| u8::from(x > 0.45)).collect();
        let m = one_d(&xs, &ys);
        let t = train_tree(&m, &TreeConfig::default()).unwrap();
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert!(threshold > 0.4 && threshold <= 0.6),
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&m), ys);
    }

    #[test]
    fn depth_zero_is_majority_stump() {
        let m = one_d(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0, 1, 1, 0, 1]);
        let t = train_tree(
            &m,
            &TreeConfig {
                max_depth: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { counts: [2, 3] }]);
        assert_eq!(t.predict(&m), vec![1; 5]);
    }

    #[test]
    fn empty_input() {
        let m = FeatureMatrix::new(vec!["a".into()], vec![], vec![]).unwrap();
        assert!(matches!(train_tree(&m, &TreeConfig::default()), Err(Error::EmptyInput)));
    }

    #[test]
    fn tie_prefers_lower_feature() {
        // Both columns separate the classes identically.
        let rows = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let m = FeatureMatrix::from_unnamed_rows(&rows, vec![0, 0, 1, 1]).unwrap();
        let cfg = TreeConfig {
            min_samples_leaf: 1,
            ..Default::default()
        };
        let t = train_tree(&m, &cfg).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn json_round_trip() {
        let m = one_d(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0, 0, 0, 1, 1, 1, 1]);
        let t = train_tree(&m, &TreeConfig::default()).unwrap();
        let back = DecisionTree::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini([5, 0]), 0.0);
        assert_eq!(gini([2, 2]), 0.5);
    }
}
