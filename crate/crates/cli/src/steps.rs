//! One method per subcommand. Stages hand their outputs to the next stage in
//! memory during `report-all`, and through the artifact directory otherwise.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use opam_core::analytics::{cluster_profile, emd_matrix, formation_prefixes, FormationScore, SilhouetteVariant};
use opam_core::clustering::{
    elbow_select, kmeans, lloyd, tsne_embed, ClusterSpace, CurvePoint, ElbowConfig, KMeansConfig,
};
use opam_core::ingest::{generate_synthetic, ErrorPolicy, EventReader, GeneratorSpec, IngestSummary, ProfileName};
use opam_core::journeys::{
    build_journeys, cap_per_cluster, journey_matrix, sample_indices, scale_unit_interval, stratified_subsample,
};
use opam_core::models::{
    nearest, per_cluster_evaluate, squared_distance, ForestConfig, ModelSpec, PerClusterReport, SplitSpec,
};
use opam_core::pll::{robustness_sweep, select_k, spearman, KSelection, PllCell};
use opam_core::ranking::{fisher_scores, forest_importance, FeatureRanking, RankingMethod};
use opam_core::seed::derive_seed;
use opam_core::sessions::{sessionize, write_session_csv, SessionRecord};
use opam_core::FeatureMatrix;

use crate::config::{KChoice, PipelineConfig};
use crate::manifest::ManifestFile;
use crate::{MissingPrerequisite, UsageError};

// Sub-seeds per stage, so that stages do not share random streams.
const SEED_RANK: u64 = 1;
const SEED_CLUSTER: u64 = 2;
const SEED_TSNE: u64 = 3;
const SEED_PLL: u64 = 4;
const SEED_CLASSIFY: u64 = 5;

type Rows = BTreeMap<String, u64>;

fn rows<const N: usize>(pairs: [(&str, u64); N]) -> Rows {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Serialize)]
struct RankingArtifact {
    method: RankingMethod,
    top_k: usize,
    /// Selected column names, in journey-feature order.
    selected: Vec<String>,
    ranking: FeatureRanking,
    sample_rows: usize,
}

#[derive(Serialize)]
struct ElbowArtifact {
    space: ClusterSpace,
    k_mode: &'static str,
    chosen_k: usize,
    /// Rows the K search (and t-SNE) ran on.
    sample_rows: usize,
    curve: Vec<CurvePoint>,
    knee_strength: Option<f64>,
    low_confidence: Option<bool>,
    monotone: Option<bool>,
    tsne_kl: Option<f64>,
    /// Distortion of the final assignment over all rows, in feature space.
    distortion: f64,
    refine_iterations: usize,
    refine_converged: bool,
    cluster_sizes: Vec<usize>,
}

#[derive(Serialize)]
struct FormationArtifact {
    variant: SilhouetteVariant,
    /// Clusters are ordered by size (cluster 0 is the largest); entry `m`
    /// scores clusters `0..=m+1`.
    prefixes: Vec<FormationScore>,
}

#[derive(Serialize)]
struct PllSummary {
    k: usize,
    alpha: f64,
    repeats: usize,
    max_per_cluster: usize,
    rows: usize,
    k_selection: KSelection,
    /// Spearman ρ between `p` and mean accuracy, per cluster.
    spearman_accuracy: Vec<Option<f64>>,
    cells: Vec<PllCell>,
}

#[derive(Serialize)]
struct MetricsArtifact {
    model: ModelSpec,
    split: SplitSpec,
    sample_rows: usize,
    report: PerClusterReport,
}

pub struct Runner {
    cfg: PipelineConfig,
    manifest: ManifestFile,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    m.write_csv(create(path)?)?;
    Ok(())
}

impl Runner {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
        let manifest = ManifestFile::open(&cfg.out, cfg.raw.sha256(), cfg.seed, cfg.raw.entries().clone());
        Ok(Self { cfg, manifest })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn require(&self, name: &str, step: &'static str) -> Result<PathBuf> {
        let path = self.path(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(MissingPrerequisite { artifact: path, step }.into())
        }
    }

    fn load_matrix(&self, name: &str, step: &'static str) -> Result<FeatureMatrix> {
        let path = self.require(name, step)?;
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        FeatureMatrix::read_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
    }

    fn timed<T>(&mut self, step: &str, f: impl FnOnce(&Self) -> Result<(T, Rows)>) -> Result<T> {
        let start = Instant::now();
        let (out, rows) = f(self)?;
        let elapsed = start.elapsed();
        info!("{step}: {:.2}s {rows:?}", elapsed.as_secs_f64());
        self.manifest.record(step, elapsed, rows)?;
        Ok(out)
    }

    pub fn generate(&mut self) -> Result<()> {
        self.timed("generate", |r| {
            let (users, seed) = (r.cfg.users, r.cfg.seed);
            let spec = match r.cfg.profile.name() {
                ProfileName::Cosmetics => GeneratorSpec::cosmetics_preset(users, seed),
                ProfileName::Electronics => GeneratorSpec::electronics_preset(users, seed),
                ProfileName::Custom => bail!(UsageError(
                    "`generate` has presets for cosmetics and electronics only".into()
                )),
            };
            let (manifest, mut w) = generate_synthetic(&spec, create(&r.path("events.csv"))?)?;
            w.flush()?;
            std::fs::write(r.path("personas.json"), manifest.personas_json()? + "\n")?;
            Ok((
                (),
                rows([
                    ("users", users as u64),
                    ("events", manifest.events),
                    ("sessions", manifest.sessions),
                ]),
            ))
        })
    }

    fn events_path(&self) -> Result<PathBuf> {
        match &self.cfg.input {
            Some(p) if p.is_file() => Ok(p.clone()),
            Some(p) => bail!("input {} does not exist", p.display()),
            None => self.require("events.csv", "generate"),
        }
    }

    /// Streams the event log into sessions and writes sessions.csv.
    pub fn sessions(&mut self) -> Result<Vec<SessionRecord>> {
        self.timed("sessions", |r| {
            let path = r.events_path()?;
            let mut reader = EventReader::open(&path, r.cfg.profile, ErrorPolicy::SkipAndCount)?;
            let mut failure = None;
            let records = sessionize(reader.by_ref().map_while(|e| e.map_err(|err| failure = Some(err)).ok()));
            if let Some(err) = failure {
                return Err(anyhow::Error::new(err).context(format!("reading {}", path.display())));
            }
            let summary: IngestSummary = reader.into_summary();
            if summary.events == 0 {
                bail!("{} contains no usable events", path.display());
            }
            for e in &summary.error_samples {
                log::warn!("skipped row: {e}");
            }
            write_session_csv(&records, &r.cfg.profile, create(&r.path("sessions.csv"))?)?;
            let counts = rows([
                ("rows_read", summary.rows_read),
                ("events", summary.events),
                ("row_errors", summary.errors),
                ("sessions", records.len() as u64),
            ]);
            Ok((records, counts))
        })
    }

    /// Journey features (unscaled) into journeys.csv.
    pub fn journeys(&mut self) -> Result<FeatureMatrix> {
        let sessions = self.sessions()?;
        self.journeys_from(sessions)
    }

    fn journeys_from(&mut self, sessions: Vec<SessionRecord>) -> Result<FeatureMatrix> {
        self.timed("journeys", |r| {
            let journeys = build_journeys(sessions, r.cfg.grouping);
            let m = journey_matrix(&journeys)?;
            write_matrix(&r.path("journeys.csv"), &m)?;
            let [n0, n1] = m.class_counts();
            Ok((
                m,
                rows([
                    ("journeys", journeys.len() as u64),
                    ("purchasing", n1 as u64),
                    ("browsing", n0 as u64),
                ]),
            ))
        })
    }

    pub fn rank(&mut self) -> Result<(FeatureMatrix, Vec<usize>)> {
        let m = self.load_matrix("journeys.csv", "journeys")?;
        let selected = self.rank_from(&m)?;
        Ok((m, selected))
    }

    fn rank_from(&mut self, m: &FeatureMatrix) -> Result<Vec<usize>> {
        self.timed("rank", |r| {
            let cfg = &r.cfg;
            let (ranking, sample_rows) = match cfg.rank_method {
                RankingMethod::Fisher => (fisher_scores(m)?, m.n_rows()),
                RankingMethod::ForestImpurity => {
                    let seed = derive_seed(cfg.seed, &[SEED_RANK]);
                    let sample = if m.n_rows() > cfg.rank_sample_size {
                        m.select_rows(&sample_indices(m.n_rows(), cfg.rank_sample_size, seed)?)
                    } else {
                        m.clone()
                    };
                    let forest = ForestConfig {
                        n_trees: cfg.rank_trees,
                        seed,
                        ..ForestConfig::default()
                    };
                    (forest_importance(&sample, &forest)?, sample.n_rows())
                }
            };
            let mut selected = ranking.top_k(cfg.top_k.min(m.n_cols()));
            selected.sort_unstable();
            let artifact = RankingArtifact {
                method: cfg.rank_method,
                top_k: selected.len(),
                selected: selected.iter().map(|&j| m.columns()[j].clone()).collect(),
                ranking,
                sample_rows,
            };
            write_json(&r.path("ranking.json"), &artifact)?;
            Ok((
                selected,
                rows([("features", m.n_cols() as u64), ("selected", artifact.top_k as u64)]),
            ))
        })
    }

    pub fn cluster(&mut self) -> Result<FeatureMatrix> {
        let m = self.load_matrix("journeys.csv", "journeys")?;
        let path = self.require("ranking.json", "rank")?;
        let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let names: Vec<String> = serde_json::from_value(value["selected"].clone())
            .with_context(|| format!("{} has no `selected` list", path.display()))?;
        let selected = names
            .iter()
            .map(|n| {
                m.columns()
                    .iter()
                    .position(|c| c == n)
                    .with_context(|| format!("journeys.csv has no column `{n}`"))
            })
            .collect::<Result<Vec<_>>>()?;
        self.cluster_from(&m, &selected)
    }

    fn cluster_from(&mut self, journeys: &FeatureMatrix, selected: &[usize]) -> Result<FeatureMatrix> {
        self.timed("cluster", |r| {
            let cfg = &r.cfg;
            let cc = &cfg.cluster;
            let seed = derive_seed(cfg.seed, &[SEED_CLUSTER]);
            let mut x = journeys.select_columns(selected)?;
            if cfg.scale {
                x = scale_unit_interval(&x);
            }
            let (n, d) = (x.n_rows(), x.n_cols());
            let elbow_cfg = |k_min, k_max| ElbowConfig {
                k_min,
                k_max,
                n_init: cc.n_init,
                max_iter: cc.max_iter,
                seed,
            };
            let kmeans_cfg = |k| KMeansConfig {
                k,
                n_init: cc.n_init,
                max_iter: cc.max_iter,
                seed,
            };
            let mut artifact = ElbowArtifact {
                space: cc.space,
                k_mode: if cc.k == KChoice::Auto { "auto" } else { "fixed" },
                chosen_k: 0,
                sample_rows: 0,
                curve: Vec::new(),
                knee_strength: None,
                low_confidence: None,
                monotone: None,
                tsne_kl: None,
                distortion: 0.0,
                refine_iterations: 0,
                refine_converged: true,
                cluster_sizes: Vec::new(),
            };

            let assignments = match cc.space {
                ClusterSpace::Raw => {
                    let idx = sample_indices(n, cc.sample_size.min(n), seed)?;
                    let sample = x.select_rows(&idx);
                    let centroids = match cc.k {
                        KChoice::Auto => {
                            let e = elbow_select(sample.values(), d, &elbow_cfg(cc.k_min, cc.k_max))?;
                            artifact.knee_strength = Some(e.knee_strength);
                            artifact.low_confidence = Some(e.low_confidence);
                            artifact.monotone = Some(e.monotone);
                            artifact.chosen_k = e.chosen_k;
                            artifact.curve = e.curve.clone();
                            e.model_for(e.chosen_k).expect("chosen K was fitted").centroids.clone()
                        }
                        KChoice::Fixed(k) => {
                            let model = kmeans(sample.values(), d, &kmeans_cfg(k))?;
                            artifact.chosen_k = k;
                            artifact.curve = vec![CurvePoint {
                                k,
                                distortion: model.distortion,
                            }];
                            model.centroids
                        }
                    };
                    artifact.sample_rows = sample.n_rows();
                    if cc.refine_iter > 0 {
                        let run = lloyd(x.values(), d, centroids, cc.refine_iter);
                        artifact.refine_iterations = run.history.len();
                        artifact.refine_converged = run.converged;
                        run.assignments
                    } else {
                        x.rows().map(|row| nearest_centroid(row, &centroids, d)).collect()
                    }
                }
                ClusterSpace::Tsne => {
                    let tsne_seed = derive_seed(cfg.seed, &[SEED_TSNE]);
                    let idx = sample_indices(n, cc.tsne_sample_size.min(n), tsne_seed)?;
                    let sample = x.select_rows(&idx);
                    let emb = tsne_embed(
                        &sample,
                        &opam_core::clustering::TsneConfig {
                            seed: tsne_seed,
                            ..cc.tsne
                        },
                    )?;
                    artifact.tsne_kl = Some(emb.kl);
                    artifact.sample_rows = sample.n_rows();
                    let sample_assign = match cc.k {
                        KChoice::Auto => {
                            let e = elbow_select(&emb.coords, 2, &elbow_cfg(cc.k_min, cc.k_max))?;
                            artifact.knee_strength = Some(e.knee_strength);
                            artifact.low_confidence = Some(e.low_confidence);
                            artifact.monotone = Some(e.monotone);
                            artifact.chosen_k = e.chosen_k;
                            artifact.curve = e.curve.clone();
                            e.model_for(e.chosen_k)
                                .expect("chosen K was fitted")
                                .assignments
                                .clone()
                        }
                        KChoice::Fixed(k) => {
                            let model = kmeans(&emb.coords, 2, &kmeans_cfg(k))?;
                            artifact.chosen_k = k;
                            artifact.curve = vec![CurvePoint {
                                k,
                                distortion: model.distortion,
                            }];
                            model.assignments
                        }
                    };
                    // Rows outside the embedded sample take the cluster of their
                    // nearest sampled row in feature space.
                    let mut in_sample = vec![None; n];
                    for (s, &i) in idx.iter().enumerate() {
                        in_sample[i] = Some(sample_assign[s]);
                    }
                    let assigned: Vec<usize> = (0..n)
                        .into_par_iter()
                        .map(|i| in_sample[i].unwrap_or_else(|| sample_assign[nearest(&sample, x.row(i), 1, None)[0]]))
                        .collect();
                    let plane = emb.to_matrix(&sample).with_clusters(sample_assign)?;
                    write_matrix(
                        &r.path("embedding.csv"),
                        &relabel_like(&plane, &assigned, artifact.chosen_k)?,
                    )?;
                    assigned
                }
            };

            let k = artifact.chosen_k;
            let (assignments, sizes) = relabel_by_size(&assignments, k);
            let clustered = x.with_clusters(assignments)?;
            artifact.distortion = distortion(&clustered, k);
            artifact.cluster_sizes = sizes;
            write_matrix(&r.path("clusters.csv"), &clustered)?;
            write_json(&r.path("elbow.json"), &artifact)?;
            let counts = rows([
                ("rows", n as u64),
                ("features", d as u64),
                ("sample_rows", artifact.sample_rows as u64),
                ("k", k as u64),
            ]);
            Ok((clustered, counts))
        })
    }

    fn clustered(&self) -> Result<FeatureMatrix> {
        let m = self.load_matrix("clusters.csv", "cluster")?;
        if m.clusters().is_none() {
            bail!(MissingPrerequisite {
                artifact: self.path("clusters.csv"),
                step: "cluster"
            });
        }
        Ok(m)
    }

    pub fn analyze(&mut self) -> Result<()> {
        let m = self.clustered()?;
        self.analyze_from(&m)
    }

    fn analyze_from(&mut self, m: &FeatureMatrix) -> Result<()> {
        self.timed("analyze", |r| {
            let order: Vec<usize> = (0..m.n_clusters()).collect();
            let prefixes = if order.len() >= 2 {
                formation_prefixes(m, &order, r.cfg.silhouette)?
            } else {
                Vec::new()
            };
            write_json(
                &r.path("formation.json"),
                &FormationArtifact {
                    variant: r.cfg.silhouette,
                    prefixes,
                },
            )?;
            let profile = cluster_profile(m)?;
            write_json(&r.path("profile.json"), &profile)?;
            Ok((
                (),
                rows([("rows", m.n_rows() as u64), ("clusters", order.len() as u64)]),
            ))
        })
    }

    pub fn emd(&mut self) -> Result<()> {
        let m = self.clustered()?;
        self.emd_from(&m)
    }

    fn emd_from(&mut self, m: &FeatureMatrix) -> Result<()> {
        self.timed("emd", |r| {
            let report = emd_matrix(m, &r.cfg.emd)?;
            write_json(&r.path("emd.json"), &report)?;
            report.write_heatmap_csv(create(&r.path("emd_heatmap.csv"))?)?;
            Ok((
                (),
                rows([("rows", m.n_rows() as u64), ("clusters", report.clusters.len() as u64)]),
            ))
        })
    }

    pub fn pll(&mut self) -> Result<()> {
        let m = self.clustered()?;
        self.pll_from(&m)
    }

    fn pll_from(&mut self, m: &FeatureMatrix) -> Result<()> {
        self.timed("pll", |r| {
            let seed = derive_seed(r.cfg.seed, &[SEED_PLL]);
            let capped = cap_per_cluster(m, r.cfg.pll_max_per_cluster, seed)?;
            let pll_cfg = opam_core::pll::PllConfig {
                seed,
                ..r.cfg.pll.clone()
            };
            let k_selection = select_k(&capped, &pll_cfg)?;
            let curve = robustness_sweep(&capped, &pll_cfg)?;
            curve.write_csv(create(&r.path("pll.csv"))?)?;
            let spearman_accuracy = (0..capped.n_clusters())
                .map(|q| {
                    let (ps, accs): (Vec<f64>, Vec<f64>) = curve
                        .cluster(q)
                        .iter()
                        .filter_map(|c| c.mean_accuracy.map(|a| (c.p, a)))
                        .unzip();
                    spearman(&ps, &accs)
                })
                .collect();
            let summary = PllSummary {
                k: curve.k,
                alpha: curve.alpha,
                repeats: curve.repeats,
                max_per_cluster: r.cfg.pll_max_per_cluster,
                rows: capped.n_rows(),
                k_selection,
                spearman_accuracy,
                cells: curve.cells,
            };
            write_json(&r.path("pll.json"), &summary)?;
            Ok((
                (),
                rows([("rows", capped.n_rows() as u64), ("cells", summary.cells.len() as u64)]),
            ))
        })
    }

    pub fn classify(&mut self) -> Result<()> {
        let m = self.clustered()?;
        self.classify_from(&m)
    }

    fn classify_from(&mut self, m: &FeatureMatrix) -> Result<()> {
        self.timed("classify", |r| {
            let seed = derive_seed(r.cfg.seed, &[SEED_CLASSIFY]);
            let sample = if m.n_rows() > r.cfg.classify_sample_size {
                stratified_subsample(m, r.cfg.classify_sample_size, seed)?
            } else {
                m.clone()
            };
            let split = SplitSpec { seed, ..r.cfg.split };
            let report = per_cluster_evaluate(&sample, &r.cfg.model, &split)?;
            let artifact = MetricsArtifact {
                model: r.cfg.model,
                split,
                sample_rows: sample.n_rows(),
                report,
            };
            write_json(&r.path("metrics.json"), &artifact)?;
            Ok(((), rows([("rows", sample.n_rows() as u64)])))
        })
    }

    pub fn report_all(&mut self) -> Result<()> {
        let sessions = self.sessions()?;
        let journeys = self.journeys_from(sessions)?;
        let selected = self.rank_from(&journeys)?;
        let clustered = self.cluster_from(&journeys, &selected)?;
        drop(journeys);
        self.analyze_from(&clustered)?;
        self.emd_from(&clustered)?;
        self.pll_from(&clustered)?;
        self.classify_from(&clustered)
    }
}

fn nearest_centroid(row: &[f64], centroids: &[f64], d: usize) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (q, c) in centroids.chunks_exact(d).enumerate() {
        let dist = squared_distance(row, c);
        if dist < best.0 {
            best = (dist, q);
        }
    }
    best.1
}

/// New id of every old cluster id when clusters are renumbered by
/// decreasing size (ties by old id), plus the sizes in new-id order.
fn size_order(assignments: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut counts = vec![0usize; k];
    for &q in assignments {
        counts[q] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut new_id = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new;
    }
    (new_id, order.iter().map(|&q| counts[q]).collect())
}

fn relabel_by_size(assignments: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let (new_id, sizes) = size_order(assignments, k);
    (assignments.iter().map(|&q| new_id[q]).collect(), sizes)
}

/// Applies the size ordering of the full assignment to the sample's clusters.
fn relabel_like(sample: &FeatureMatrix, full: &[usize], k: usize) -> Result<FeatureMatrix> {
    let (new_id, _) = size_order(full, k);
    let q = sample.require_clusters()?.iter().map(|&q| new_id[q]).collect();
    Ok(sample.clone().with_clusters(q)?)
}

fn distortion(m: &FeatureMatrix, k: usize) -> f64 {
    let d = m.n_cols();
    let clusters = m.clusters().expect("clustered");
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &q) in m.rows().zip(clusters) {
        counts[q] += 1;
        for (s, v) in sums[q * d..(q + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    for q in 0..k {
        if counts[q] > 0 {
            sums[q * d..(q + 1) * d].iter_mut().for_each(|s| *s /= counts[q] as f64);
        }
    }
    m.rows()
        .zip(clusters)
        .map(|(row, &q)| squared_distance(row, &sums[q * d..(q + 1) * d]))
        .sum()
}
