//! Journey clustering: planar t-SNE embedding, k-means and elbow selection.

mod elbow;
mod kmeans;
mod tsne;

use serde::{Deserialize, Serialize};

pub use elbow::{elbow_select, knee_index, CurvePoint, ElbowConfig, ElbowResult};
pub use kmeans::{kmeans, kmeans_pp_init, kmeans_runs, lloyd, ClusterModel, KMeansConfig, LloydRun};
pub use tsne::{
    conditional_affinities, joint_affinities, kl_divergence, kl_gradient, tsne_embed, Embedding, TsneConfig,
    ENTROPY_TOL, MAX_BISECTIONS, OUTPUT_DIMS,
};

/// Where k-means runs: on the t-SNE plane or on the scaled features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSpace {
    #[default]
    Tsne,
    Raw,
}
