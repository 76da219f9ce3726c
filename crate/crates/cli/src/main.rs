//! `opam`: runs the purchase-behavior pipeline stage by stage or end to end.

mod config;
mod manifest;
mod steps;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{PipelineConfig, RawConfig};

/// Bad flags, settings or config files. Exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An artifact that an earlier subcommand should have produced. Exit status 1.
#[derive(Debug)]
pub struct MissingPrerequisite {
    pub artifact: PathBuf,
    pub step: &'static str,
}

impl fmt::Display for MissingPrerequisite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} not found; run `opam {}` first",
            self.artifact.display(),
            self.step
        )
    }
}

impl std::error::Error for MissingPrerequisite {}

#[derive(Debug, Parser)]
#[command(
    name = "opam",
    version,
    about = "Purchase-behavior analysis of e-commerce clickstreams"
)]
struct Cli {
    /// INI file with per-module sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["cosmetics", "electronics", "custom"])]
    profile: Option<String>,
    /// Event log CSV (defaults to `<out>/events.csv`).
    #[arg(long, global = true, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is the serial reference mode, 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Number of clusters, or `auto` for the elbow rule.
    #[arg(long, global = true, value_name = "auto|N")]
    k: Option<String>,
    #[arg(long, global = true, value_parser = ["tsne", "raw"])]
    space: Option<String>,
    /// Override any config setting, e.g. `--set pll.repeats=20`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic event log and its persona ground truth.
    Generate {
        #[arg(long)]
        users: Option<usize>,
    },
    /// Sessionize the event log into sessions.csv.
    Sessions,
    /// Build journey features into journeys.csv.
    Journeys,
    /// Rank journey features into ranking.json.
    Rank,
    /// Scale, cluster and write clusters.csv.
    Cluster,
    /// Formation scores and cluster composition.
    Analyze,
    /// Pairwise earth-mover distances between clusters.
    Emd,
    /// Label-propagation robustness curves.
    Pll,
    /// Per-cluster classification metrics.
    Classify,
    /// Every stage after `generate`, parsing the log once.
    ReportAll,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, UsageError> {
    let mut raw = RawConfig::default();
    if let Some(path) = &cli.config {
        raw.merge_file(path)?;
    }
    for s in &cli.set {
        raw.merge_assignment(s)?;
    }
    let flags = [
        ("pipeline.profile", cli.profile.clone()),
        ("pipeline.input", cli.input.as_ref().map(|p| p.display().to_string())),
        ("pipeline.out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("pipeline.seed", cli.seed.map(|v| v.to_string())),
        ("pipeline.threads", cli.threads.map(|v| v.to_string())),
        ("cluster.k", cli.k.clone()),
        ("cluster.space", cli.space.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            raw.set(key, &v)?;
        }
    }
    if let Command::Generate { users: Some(n) } = cli.command {
        raw.set("generate.users", &n.to_string())?;
    }
    PipelineConfig::from_raw(raw)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size the worker pool: {e}")))?;
    }
    let mut runner = steps::Runner::new(cfg)?;
    match cli.command {
        Command::Generate { .. } => runner.generate(),
        Command::Sessions => runner.sessions().map(drop),
        Command::Journeys => runner.journeys().map(drop),
        Command::Rank => runner.rank().map(drop),
        Command::Cluster => runner.cluster().map(drop),
        Command::Analyze => runner.analyze(),
        Command::Emd => runner.emd(),
        Command::Pll => runner.pll(),
        Command::Classify => runner.classify(),
        Command::ReportAll => runner.report_all(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OPAM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
