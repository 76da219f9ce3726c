//! Feature ranking by two-class Fisher score and by forest impurity importance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::models::{train_forest, ForestConfig};

/// Floor on the pooled within-class variance.
pub const FISHER_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMethod {
    Fisher,
    ForestImpurity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    /// Column index in the source matrix.
    pub column: usize,
    pub score: f64,
    /// 1 = best.
    pub rank: usize,
    pub method: RankingMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: RankingMethod,
    /// Sorted by rank.
    pub features: Vec<RankedFeature>,
    /// Set when no score could be computed (e.g. a forest without splits).
    pub degenerate: bool,
}

impl FeatureRanking {
    fn from_scores(matrix: &FeatureMatrix, scores: Vec<f64>, method: RankingMethod, degenerate: bool) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let features = order
            .into_iter()
            .enumerate()
            .map(|(r, j)| RankedFeature {
                name: matrix.columns()[j].clone(),
                column: j,
                score: scores[j],
                rank: r + 1,
                method,
            })
            .collect();
        Self {
            method,
            features,
            degenerate,
        }
    }

    /// Scores in column order.
    pub fn scores_by_column(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.features.len()];
        for f in &self.features {
            s[f.column] = f.score;
        }
        s
    }

    /// Column indices of the `k` best features, best first.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        self.features.iter().take(k).map(|f| f.column).collect()
    }
}

/// Per feature: `Σ_c n_c (μ_c − μ)² / max(Σ_c n_c σ_c², ε)` over the two
/// label classes, with population variances.
pub fn fisher_scores(matrix: &FeatureMatrix) -> Result<FeatureRanking> {
    let [n0, n1] = matrix.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let d = matrix.n_cols();
    let n = matrix.n_rows() as f64;
    let class_n = [n0 as f64, n1 as f64];
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for (row, &y) in matrix.rows().zip(matrix.labels()) {
        for (acc, &v) in sums[usize::from(y)].iter_mut().zip(row) {
            *acc += v;
        }
    }
    let means: [Vec<f64>; 2] = [0, 1].map(|c| sums[c].iter().map(|s| s / class_n[c]).collect());
    let overall: Vec<f64> = (0..d).map(|j| (sums[0][j] + sums[1][j]) / n).collect();
    let mut within = vec![0.0; d];
    for (row, &y) in matrix.rows().zip(matrix.labels()) {
        let mu = &means[usize::from(y)];
        for j in 0..d {
            within[j] += (row[j] - mu[j]).powi(2);
        }
    }
    let scores = (0..d)
        .map(|j| {
            let between: f64 = (0..2).map(|c| class_n[c] * (means[c][j] - overall[j]).powi(2)).sum();
            between / within[j].max(FISHER_EPS)
        })
        .collect();
    Ok(FeatureRanking::from_scores(
        matrix,
        scores,
        RankingMethod::Fisher,
        false,
    ))
}

/// Normalized Gini importance from a forest trained on `matrix`.
pub fn forest_importance(matrix: &FeatureMatrix, config: &ForestConfig) -> Result<FeatureRanking> {
    let forest = train_forest(matrix, config)?;
    Ok(match forest.importances() {
        Some(imp) => FeatureRanking::from_scores(matrix, imp, RankingMethod::ForestImpurity, false),
        None => FeatureRanking::from_scores(matrix, vec![0.0; matrix.n_cols()], RankingMethod::ForestImpurity, true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TreeConfig;
    use crate::seed::rng;
    use rand::Rng as _;

    /// Direct two-pass evaluation of the formula for one column.
    fn fisher_oracle(xs: &[f64], ys: &[u8]) -> f64 {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let c0: Vec<f64> = xs.iter().zip(ys).filter(|p| *p.1 == 0).map(|p| *p.0).collect();
        let c1: Vec<f64> = xs.iter().zip(ys).filter(|p| *p.1 == 1).map(|p| *p.0).collect();
        let mu = mean(xs);
        let (m0, m1) = (mean(&c0), mean(&c1));
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        let num = c0.len() as f64 * (m0 - mu).powi(2) + c1.len() as f64 * (m1 - mu).powi(2);
        let den = c0.len() as f64 * var(&c0, m0) + c1.len() as f64 * var(&c1, m1);
        num / den.max(FISHER_EPS)
    }

    #[test]
    fn six_sample_fixture() {
        // Hand arithmetic, feature a: class 0 {1,2,3} μ0=2, class 1 {4,6,8} μ1=6, μ=4.
        // between = 3·4 + 3·4 = 24; within = 2 + 8 = 10 → 2.4.
        // feature b: class 0 {0,1,0}, class 1 {1,0,1}; μ0=1/3, μ1=2/3, μ=1/2.
        // between = 6·(1/6)² = 1/6; within = 3·(2/9)·2 = 4/3 → 1/8.
        let rows = vec![
            vec![1.0, 0.0],
            vec![2.0, 1.0],
            vec![3.0, 0.0],
            vec![4.0, 1.0],
            vec![6.0, 0.0],
            vec![8.0, 1.0],
        ];
        let ys = vec![0, 0, 0, 1, 1, 1];
        let m = FeatureMatrix::from_unnamed_rows(&rows, ys.clone()).unwrap();
        let r = fisher_scores(&m).unwrap();
        let s = r.scores_by_column();
        assert!((s[0] - 2.4).abs() < 1e-12);
        assert!((s[1] - 0.125).abs() < 1e-12);
        let a: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        assert!((s[0] - fisher_oracle(&a, &ys)).abs() < 1e-12);
        assert_eq!(r.features[0].name, "f0");
        assert_eq!(r.features[0].rank, 1);
    }

    #[test]
    fn constant_and_perfect_features() {
        let rows = vec![vec![3.0, 0.0], vec![3.0, 0.0], vec![3.0, 1.0], vec![3.0, 1.0]];
        let m = FeatureMatrix::from_unnamed_rows(&rows, vec![0, 0, 1, 1]).unwrap();
        let s = fisher_scores(&m).unwrap().scores_by_column();
        assert_eq!(s[0], 0.0);
        // between = 2·0.25 + 2·0.25 = 1, within = 0 → 1/ε
        assert_eq!(s[1], 1.0 / FISHER_EPS);
        let single = FeatureMatrix::from_unnamed_rows(&rows, vec![1; 4]).unwrap();
        assert!(matches!(fisher_scores(&single), Err(Error::SingleClass)));
    }

    fn informative(n: usize, seed: u64, duplicate: bool) -> FeatureMatrix {
        let mut r = rng(seed);
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let y = r.gen::<bool>();
            let signal = f64::from(u8::from(y)) + 0.3 * r.gen::<f64>();
            let mut row = vec![r.gen::<f64>(), signal, r.gen::<f64>(), r.gen::<f64>()];
            if duplicate {
                row.push(signal);
            }
            rows.push(row);
            ys.push(u8::from(y));
        }
        FeatureMatrix::from_unnamed_rows(&rows, ys).unwrap()
    }

    #[test]
    fn forest_finds_the_informative_feature() {
        let m = informative(300, 4, false);
        let cfg = ForestConfig {
            n_trees: 20,
            seed: 1,
            ..Default::default()
        };
        let r = forest_importance(&m, &cfg).unwrap();
        assert_eq!(r.features[0].column, 1);
        let total: f64 = r.features.iter().map(|f| f.score).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicates_share_importance() {
        let m = informative(300, 5, true);
        let cfg = ForestConfig {
            n_trees: 30,
            seed: 2,
            ..Default::default()
        };
        let s = forest_importance(&m, &cfg).unwrap().scores_by_column();
        let pair = s[1] + s[4];
        assert!(s[1] > 0.0 && s[4] > 0.0);
        for j in [0, 2, 3] {
            assert!(pair > s[j]);
        }
    }

    #[test]
    fn zero_split_forest_is_flagged() {
        let m = informative(50, 6, false);
        let cfg = ForestConfig {
            n_trees: 2,
            tree: TreeConfig {
                max_depth: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = forest_importance(&m, &cfg).unwrap();
        assert!(r.degenerate);
        assert!(r.features.iter().all(|f| f.score == 0.0));
    }
}
