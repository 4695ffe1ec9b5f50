//! `foresteyes`: campaign pipelines from rasters to volunteer reports.
//!
//! Every subcommand writes its artifacts under `<out>/<workflow_id>/`, prints
//! a one-line JSON summary on stdout and, on failure, a categorized JSON
//! error on stderr with a nonzero exit status.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Algorithm, CampaignConfig};

#[derive(Debug, Parser)]
#[command(
    name = "foresteyes",
    version,
    about = "Citizen-science deforestation campaign engine"
)]
pub struct Cli {
    /// Campaign configuration JSON; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; artifacts go to <out>/<workflow_id>/.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Workflow identifier.
    #[arg(long, global = true)]
    pub workflow: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a volunteer answer export.
    Ingest(IngestArgs),
    /// Render color composites (or an NDVI panel) from a band stack.
    Compose(ComposeArgs),
    /// Fit PCA on a band stack and write the principal-component composite.
    Pca(PcaArgs),
    /// Superpixel segmentation of a composite.
    Segment(SegmentArgs),
    /// Re-segment hard segments with k-means.
    Refine(RefineArgs),
    /// Binarize a class map and build segment-level ground truth.
    Gt(GtArgs),
    /// Render task panels and write the task manifest.
    Tasks(TasksArgs),
    /// Majority-vote consensus, entropy difficulty and accuracy tables.
    Aggregate(AggregateArgs),
    /// Volunteer hit rates, scores, ranking and cohort averages.
    Score(AnswersArgs),
    /// Consensus convergence over answer-count prefixes.
    Convergence(ConvergenceArgs),
    /// Answer-time statistics.
    Times(AnswersArgs),
    /// Consolidated Markdown report with CSV appendices.
    Report(ReportArgs),
    /// Generate a synthetic answer log from segment ground truth.
    Simulate(SimulateArgs),
    /// Two-epoch deforestation detection report.
    Changedetect(ChangeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Compose(_) => "compose",
            Command::Pca(_) => "pca",
            Command::Segment(_) => "segment",
            Command::Refine(_) => "refine",
            Command::Gt(_) => "gt",
            Command::Tasks(_) => "tasks",
            Command::Aggregate(_) => "aggregate",
            Command::Score(_) => "score",
            Command::Convergence(_) => "convergence",
            Command::Times(_) => "times",
            Command::Report(_) => "report",
            Command::Simulate(_) => "simulate",
            Command::Changedetect(_) => "changedetect",
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Answer CSV export.
    #[arg(long)]
    pub answers: PathBuf,
    /// JSON column/value mapping for platform exports.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Band stack (defaults to the configured raster).
    #[arg(long)]
    pub raster: Option<PathBuf>,
    /// Zero-based R,G,B band indices; renders a single panel.
    #[arg(long, value_parser = list::<usize, 3>)]
    pub bands: Option<[usize; 3]>,
    /// Zero-based RED,NIR band indices; renders an NDVI panel.
    #[arg(long, value_parser = list::<usize, 2>, conflicts_with = "bands")]
    pub ndvi: Option<[usize; 2]>,
    /// Lower,upper percentile stretch.
    #[arg(long, value_parser = list::<f64, 2>)]
    pub stretch: Option<[f64; 2]>,
    /// Output name for a single panel.
    #[arg(long, default_value = "composite")]
    pub name: String,
    /// Crop window ROW,COL,HEIGHT,WIDTH applied before rendering.
    #[arg(long, value_parser = list::<usize, 4>)]
    pub crop: Option<[usize; 4]>,
    /// Resample to this pixel size (meters) before rendering.
    #[arg(long)]
    pub pixel_size: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub raster: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Composite band stack or PNG (default: <campaign>/pca).
    #[arg(long)]
    pub composite: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<Algorithm>,
    /// Requested number of segments (SLIC, IFT-SLIC).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub compactness: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Exclusion plane for MaskSLIC (u8, nonzero = masked).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value = "segments")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub composite: Option<PathBuf>,
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    /// Parent segment ids; default: Undefined, tied and hard tasks of the campaign.
    #[arg(long, value_delimiter = ',')]
    pub segments: Option<Vec<i32>>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 9)]
    pub min_size: usize,
    #[arg(long, default_value_t = 6)]
    pub max_k: usize,
    #[arg(long, default_value = "refined")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct GtArgs {
    /// Class-code plane (u8).
    #[arg(long)]
    pub classmap: Option<PathBuf>,
    /// JSON legend mapping codes to class names.
    #[arg(long)]
    pub legend: Option<PathBuf>,
    /// Class names counted as Forest.
    #[arg(long, value_delimiter = ',')]
    pub forest_classes: Option<Vec<String>>,
    /// Segmentation for segment-level ground truth (default: <campaign>/segments if present).
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TasksArgs {
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    /// Panel as KIND=PNG (repeatable); default: configured panels in the campaign directory.
    #[arg(long = "panel")]
    pub panels: Vec<String>,
    /// Answer options, e.g. Forest,NonForest,Undefined,Small.
    #[arg(long, value_delimiter = ',')]
    pub options: Option<Vec<String>>,
    #[arg(long, default_value_t = foresteyes_core::tasks::DEFAULT_MARGIN)]
    pub margin: usize,
    /// Only segments with HoR < 1.0 plus this many sampled pure Forest segments.
    #[arg(long)]
    pub select_pure: Option<usize>,
    #[arg(long)]
    pub segment_gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub answers: Option<PathBuf>,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub redundancy: Option<usize>,
    /// Offered answer options (default: from the manifest, else Forest,NonForest,Undefined).
    #[arg(long, value_delimiter = ',')]
    pub options: Option<Vec<String>>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub segment_gt: Option<PathBuf>,
    /// Segmentation and pixel ground truth for pixel-level accuracy.
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    #[arg(long)]
    pub gt_prodes: Option<PathBuf>,
    /// Exclude Undefined/Small consensus from pixel accuracy instead of counting it wrong.
    #[arg(long)]
    pub exclude_undefined: bool,
}

#[derive(Debug, Args)]
pub struct AnswersArgs {
    #[arg(long)]
    pub answers: Option<PathBuf>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub segment_gt: Option<PathBuf>,
    #[arg(long)]
    pub redundancy: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: AnswersArgs,
    #[arg(long, value_delimiter = ',', default_values_t = foresteyes_core::consensus::DEFAULT_CONVERGENCE_KS)]
    pub ks: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Campaign directory (default: <out>/<workflow_id>).
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    /// Change report to include (default: change.json in the campaign, if present).
    #[arg(long)]
    pub change: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub segment_gt: Option<PathBuf>,
    /// Which segment reference the volunteers answer against.
    #[arg(long, value_enum, default_value_t = GtChoice::GtU)]
    pub truth: GtChoice,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub pool_size: usize,
    /// Per-class volunteer accuracy.
    #[arg(long, default_value_t = 0.85)]
    pub accuracy: f64,
    /// Volunteers always answer the reference label.
    #[arg(long, conflicts_with = "accuracy")]
    pub perfect: bool,
    #[arg(long, default_value_t = 0.25)]
    pub anonymous_share: f64,
    #[arg(long)]
    pub redundancy: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GtChoice {
    GtU,
    GtM,
}

#[derive(Debug, Args)]
pub struct ChangeArgs {
    /// Earlier-epoch pixel ground truth (u8 plane).
    #[arg(long)]
    pub gt_a: PathBuf,
    /// Later-epoch pixel ground truth (u8 plane).
    #[arg(long)]
    pub gt_b: PathBuf,
    /// Later-epoch campaign directory (default: this campaign).
    #[arg(long)]
    pub campaign_b: Option<PathBuf>,
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    /// Epoch labels A,B.
    #[arg(long, value_parser = list::<String, 2>)]
    pub epochs: Option<[String; 2]>,
}

fn effective_config(cli: &Cli) -> foresteyes_core::Result<CampaignConfig> {
    let mut cfg = match &cli.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = &cli.workflow {
        cfg.workflow_id = w.clone();
    }
    Ok(cfg)
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FORESTEYES_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FORESTEYES_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Exactly `N` comma-separated values.
fn list<T: std::str::FromStr, const N: usize>(s: &str) -> Result<[T; N], String>
where
    T::Err: std::fmt::Display,
{
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<T>, String>>()?;
    let n = values.len();
    values
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated values, got {n}"))
}

fn fail(command: &str, category: &str, message: &str) -> ExitCode {
    let err =
        json!({"status": "error", "command": command, "category": category, "message": message});
    eprintln!("{err}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return fail("", "usage", first);
        }
    };
    let name = cli.command.name();
    if let Err(msg) = configure_threads() {
        return fail(name, "usage", &msg);
    }
    match effective_config(&cli).and_then(|cfg| commands::run(&cli.command, cfg)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(name, e.category(), &e.to_string()),
    }
}
