//! Pipeline configuration: built-in defaults, then an INI file, then
//! `--set section.key=value` overrides, then dedicated flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use opam_core::analytics::{EmdConfig, EmdMode, SilhouetteVariant};
use opam_core::clustering::{ClusterSpace, TsneConfig};
use opam_core::ingest::{DatasetProfile, EventType, ProfileName};
use opam_core::journeys::JourneyGrouping;
use opam_core::models::{ForestConfig, KnnConfig, ModelSpec, SplitSpec, TreeConfig};
use opam_core::pll::PllConfig;
use opam_core::ranking::RankingMethod;
use sha2::{Digest, Sha256};

use crate::UsageError;

const DEFAULTS: &[(&str, &str)] = &[
    ("pipeline.profile", "cosmetics"),
    ("pipeline.event_types", ""),
    ("pipeline.input", ""),
    ("pipeline.out", "out"),
    ("pipeline.seed", "0"),
    ("pipeline.threads", "0"),
    ("generate.users", "20000"),
    ("journeys.grouping", "user"),
    ("rank.method", "fisher"),
    ("rank.top_k", "11"),
    ("rank.trees", "50"),
    ("rank.sample_size", "20000"),
    ("scale.enabled", "true"),
    ("cluster.space", "tsne"),
    ("cluster.k", "auto"),
    ("cluster.k_min", "2"),
    ("cluster.k_max", "10"),
    ("cluster.n_init", "10"),
    ("cluster.max_iter", "300"),
    ("cluster.sample_size", "20000"),
    ("cluster.refine_iter", "50"),
    ("tsne.perplexity", "30"),
    ("tsne.iterations", "1000"),
    ("tsne.learning_rate", "200"),
    ("tsne.sample_size", "3000"),
    ("tsne.max_points", "10000"),
    ("analyze.silhouette", "pooled"),
    ("emd.bins", "1000000"),
    ("emd.mode", "pooled"),
    ("pll.alpha", "0.1"),
    ("pll.k", "3"),
    ("pll.k_candidates", "1,3,5,7,9,11,13,15"),
    ("pll.drop_fractions", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"),
    ("pll.repeats", "50"),
    ("pll.tolerance", "1e-6"),
    ("pll.max_iter", "1000"),
    ("pll.folds", "5"),
    ("pll.max_per_cluster", "2000"),
    ("classify.model", "tree"),
    ("classify.repeats", "25"),
    ("classify.train_fraction", "0.7"),
    ("classify.oversample", "true"),
    ("classify.sample_size", "20000"),
    ("classify.max_depth", "10"),
    ("classify.min_samples_leaf", "3"),
    ("classify.trees", "100"),
    ("classify.feature_fraction", "0.5"),
    ("classify.knn_k", "3"),
];

/// Flat `section.key → value` view of the effective settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig(BTreeMap<String, String>);

impl Default for RawConfig {
    fn default() -> Self {
        Self(DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        match self.0.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(UsageError(format!("unknown setting `{key}`"))),
        }
    }

    /// Applies every key of an INI file; keys outside a section belong to `pipeline`.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), UsageError> {
        let ini =
            Ini::load_from_file(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("pipeline");
            for (k, v) in props.iter() {
                self.set(&format!("{section}.{k}"), v)?;
            }
        }
        Ok(())
    }

    /// `KEY=VALUE` from the command line.
    pub fn merge_assignment(&mut self, assignment: &str) -> Result<(), UsageError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| UsageError(format!("`--set {assignment}` is not of the form section.key=value")))?;
        self.set(k.trim(), v)
    }

    fn get(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).expect("every key has a default")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, UsageError> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| UsageError(format!("invalid value `{v}` for `{key}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, UsageError> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| UsageError(format!("invalid entry `{s}` in `{key}`")))
            })
            .collect()
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<T, UsageError> {
        let v = self.get(key);
        options.iter().find(|(name, _)| *name == v).map(|o| o.1).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|o| o.0).collect();
            UsageError(format!("`{key}` must be one of {}, got `{v}`", names.join("|")))
        })
    }

    /// SHA-256 over the sorted `key=value` lines.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.0 {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct ClusterSettings {
    pub space: ClusterSpace,
    pub k: KChoice,
    pub k_min: usize,
    pub k_max: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub sample_size: usize,
    pub refine_iter: usize,
    pub tsne: TsneConfig,
    pub tsne_sample_size: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub raw: RawConfig,
    pub profile: DatasetProfile,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub users: usize,
    pub grouping: JourneyGrouping,
    pub rank_method: RankingMethod,
    pub top_k: usize,
    pub rank_trees: usize,
    pub rank_sample_size: usize,
    pub scale: bool,
    pub cluster: ClusterSettings,
    pub silhouette: SilhouetteVariant,
    pub emd: EmdConfig,
    pub pll: PllConfig,
    pub pll_max_per_cluster: usize,
    pub model: ModelSpec,
    pub split: SplitSpec,
    pub classify_sample_size: usize,
}

fn positive(key: &str, v: usize) -> Result<usize, UsageError> {
    if v == 0 {
        Err(UsageError(format!("`{key}` must be at least 1")))
    } else {
        Ok(v)
    }
}

impl PipelineConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, UsageError> {
        let profile_name: ProfileName = raw.get("pipeline.profile").parse().map_err(|e: String| UsageError(e))?;
        let event_types: Vec<EventType> = raw.list("pipeline.event_types")?;
        let profile = match profile_name {
            ProfileName::Custom if event_types.is_empty() => {
                return Err(UsageError("profile `custom` needs `pipeline.event_types`".into()))
            }
            ProfileName::Custom => DatasetProfile::custom(&event_types),
            other if !event_types.is_empty() => {
                return Err(UsageError(format!(
                    "`pipeline.event_types` only applies to `custom`, not `{other}`"
                )))
            }
            other => DatasetProfile::by_name(other),
        };
        let input = Some(raw.get("pipeline.input"))
            .filter(|s| !s.is_empty())
            .map(PathBuf::from);
        let seed: u64 = raw.parse("pipeline.seed")?;

        let k = match raw.get("cluster.k") {
            "auto" => KChoice::Auto,
            _ => KChoice::Fixed(positive("cluster.k", raw.parse("cluster.k")?)?),
        };
        let cluster = ClusterSettings {
            space: raw.choice(
                "cluster.space",
                &[("tsne", ClusterSpace::Tsne), ("raw", ClusterSpace::Raw)],
            )?,
            k,
            k_min: positive("cluster.k_min", raw.parse("cluster.k_min")?)?,
            k_max: raw.parse("cluster.k_max")?,
            n_init: positive("cluster.n_init", raw.parse("cluster.n_init")?)?,
            max_iter: positive("cluster.max_iter", raw.parse("cluster.max_iter")?)?,
            sample_size: positive("cluster.sample_size", raw.parse("cluster.sample_size")?)?,
            refine_iter: raw.parse("cluster.refine_iter")?,
            tsne: TsneConfig {
                perplexity: raw.parse("tsne.perplexity")?,
                iterations: positive("tsne.iterations", raw.parse("tsne.iterations")?)?,
                learning_rate: raw.parse("tsne.learning_rate")?,
                max_points: raw.parse("tsne.max_points")?,
                ..TsneConfig::default()
            },
            tsne_sample_size: positive("tsne.sample_size", raw.parse("tsne.sample_size")?)?,
        };
        if cluster.k_max < cluster.k_min + 2 {
            return Err(UsageError(
                "`cluster.k_max` must be at least `cluster.k_min` + 2".into(),
            ));
        }
        if cluster.tsne_sample_size > cluster.tsne.max_points {
            return Err(UsageError("`tsne.sample_size` exceeds `tsne.max_points`".into()));
        }

        let pll = PllConfig {
            alpha: raw.parse("pll.alpha")?,
            k: raw.parse("pll.k")?,
            k_candidates: raw.list("pll.k_candidates")?,
            drop_fractions: raw.list("pll.drop_fractions")?,
            repeats: raw.parse("pll.repeats")?,
            tolerance: raw.parse("pll.tolerance")?,
            max_iter: raw.parse("pll.max_iter")?,
            folds: raw.parse("pll.folds")?,
            seed,
        };
        pll.validate().map_err(|e| UsageError(e.to_string()))?;

        let tree = TreeConfig {
            max_depth: raw.parse("classify.max_depth")?,
            min_samples_leaf: positive("classify.min_samples_leaf", raw.parse("classify.min_samples_leaf")?)?,
            ..TreeConfig::default()
        };
        let model = match raw.get("classify.model") {
            "tree" => ModelSpec::Tree(tree),
            "forest" => ModelSpec::Forest(ForestConfig {
                n_trees: positive("classify.trees", raw.parse("classify.trees")?)?,
                tree,
                feature_fraction: raw.parse("classify.feature_fraction")?,
                ..ForestConfig::default()
            }),
            "knn" => ModelSpec::Knn(KnnConfig {
                k: raw.parse("classify.knn_k")?,
            }),
            other => {
                return Err(UsageError(format!(
                    "`classify.model` must be tree|forest|knn, got `{other}`"
                )))
            }
        };
        let split = SplitSpec {
            train_fraction: raw.parse("classify.train_fraction")?,
            repeats: positive("classify.repeats", raw.parse("classify.repeats")?)?,
            oversample: raw.parse("classify.oversample")?,
            seed,
        };
        if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
            return Err(UsageError("`classify.train_fraction` must be in (0, 1)".into()));
        }

        let emd = EmdConfig {
            bins: positive("emd.bins", raw.parse("emd.bins")?)?,
            mode: raw.choice(
                "emd.mode",
                &[("pooled", EmdMode::Pooled), ("per_feature", EmdMode::PerFeature)],
            )?,
        };

        Ok(Self {
            profile,
            input,
            out: PathBuf::from(raw.get("pipeline.out")),
            seed,
            threads: raw.parse("pipeline.threads")?,
            users: positive("generate.users", raw.parse("generate.users")?)?,
            grouping: raw.choice(
                "journeys.grouping",
                &[
                    ("user", JourneyGrouping::User),
                    ("user_category", JourneyGrouping::UserCategory),
                ],
            )?,
            rank_method: raw.choice(
                "rank.method",
                &[
                    ("fisher", RankingMethod::Fisher),
                    ("forest", RankingMethod::ForestImpurity),
                ],
            )?,
            top_k: positive("rank.top_k", raw.parse("rank.top_k")?)?,
            rank_trees: positive("rank.trees", raw.parse("rank.trees")?)?,
            rank_sample_size: positive("rank.sample_size", raw.parse("rank.sample_size")?)?,
            scale: raw.parse("scale.enabled")?,
            cluster,
            silhouette: raw.choice(
                "analyze.silhouette",
                &[
                    ("pooled", SilhouetteVariant::Pooled),
                    ("standard", SilhouetteVariant::Standard),
                ],
            )?,
            emd,
            pll,
            pll_max_per_cluster: positive("pll.max_per_cluster", raw.parse("pll.max_per_cluster")?)?,
            model,
            split,
            classify_sample_size: positive("classify.sample_size", raw.parse("classify.sample_size")?)?,
            raw,
        })
    }
}
