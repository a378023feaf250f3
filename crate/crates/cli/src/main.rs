//! `qsne`: embed, evaluate, sweep, generate and plot from the command line.
//!
//! Exit codes: 0 success, 1 numerical failure (divergence), 2 usage or IO error.

mod commands;
mod report;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "qsne",
    version,
    about = "Exact SNE-family embeddings with q-Gaussian kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a CSV dataset; writes embedding.csv, report.json and optionally embedding.svg.
    Embed(EmbedArgs),
    /// Evaluate every (q, perplexity, seed) combination; writes sweep.csv.
    Sweep(SweepArgs),
    /// Score an existing embedding against its input data.
    Eval(EvalArgs),
    /// Generate a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Render a 2-D embedding CSV as an SVG scatter plot.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Numeric CSV, one sample per row; a non-numeric first row is treated as a header.
    #[arg(long)]
    pub input: PathBuf,
    /// Zero-based column holding integer class labels.
    #[arg(long)]
    pub label_column: Option<usize>,
    /// Project onto this many principal components before embedding.
    #[arg(long)]
    pub pca_dims: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 200.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub momentum_early: f64,
    #[arg(long, default_value_t = 0.8)]
    pub momentum_late: f64,
    /// First iteration that uses the late momentum.
    #[arg(long, default_value_t = 250)]
    pub momentum_switch: usize,
    #[arg(long, default_value_t = 12.0)]
    pub exaggeration: f64,
    #[arg(long, default_value_t = 250)]
    pub exaggeration_iters: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Neighbours used by the k-NN accuracy score.
    #[arg(long, default_value_t = 10)]
    pub knn_k: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Sne,
    Ssne,
    Tsne,
    Qsne,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Qsne)]
    pub method: MethodArg,
    /// Kernel parameter for `--method qsne`, in [1, 3) [default: 2.0].
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Also write embedding.svg (2-D embeddings only).
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, value_delimiter = ',', default_value = "1.1,1.5,1.8,2.0,2.5")]
    pub q_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "30")]
    pub perplexity_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// The data the embedding was computed from.
    #[command(flatten)]
    pub input: InputArgs,
    /// Embedding CSV as written by `embed`.
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub knn_k: usize,
    /// Write eval.json here in addition to printing it.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(subcommand)]
    pub dataset: Dataset,
}

#[derive(Subcommand, Debug)]
pub enum Dataset {
    /// Points on a rolled 2-D sheet in 3-D, labelled by quarter of arclength parameter.
    Swissroll {
        #[arg(long, default_value_t = 1500)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Isotropic unit-variance Gaussian classes with equidistant means.
    Mixture {
        #[arg(long, default_value_t = 100)]
        n_per_class: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        /// Distance between class means.
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Embedding CSV (`y1,y2[,label]`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<qsne::Error> for Failure {
    fn from(e: qsne::Error) -> Self {
        match e {
            qsne::Error::Divergence { .. } => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("THREADS") else {
        return Ok(());
    };
    let threads = raw
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            Failure::Usage(format!("THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Embed(args) => commands::embed(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Gen(args) => commands::gen(&args),
        Command::Plot(args) => commands::plot(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
