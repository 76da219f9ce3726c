//! Measuring clusters: formation quality, composition and pairwise distance.

mod emd;
mod formation;
mod profile;

use serde::Serialize;

pub use emd::{emd_matrix, emd_pair, EmdConfig, EmdMode, EmdReport, Histogram, DEFAULT_BINS, SCALE_TOL};
pub use formation::{ch_score, formation_prefixes, ss_score, FormationScore, SilhouetteVariant};
pub use profile::{cluster_profile, ClusterProfileRow};

/// Combined analytics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticsReport {
    pub formation: Vec<FormationScore>,
    pub profile: Vec<ClusterProfileRow>,
    pub emd: EmdReport,
}
