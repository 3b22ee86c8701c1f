//! `esgnn`: generate synthetic corpora, train, evaluate and verify.
//!
//! Exit codes: 0 success, 1 usage, 2 incompatible input, 3 empty input,
//! 4 refusal, 5 verification failed.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esgnn_core::equivcheck::Family;
use esgnn_core::graphbuild::Mode;
use esgnn_core::scene::SplitName;
use esgnn_core::Error;

#[derive(Debug, Parser)]
#[command(name = "esgnn", version, about = "Equivariant scene graph networks on synthetic point-cloud scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory with a split manifest.
    GenData(GenDataArgs),
    /// Train a preset and write a checkpoint plus history CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Check invariance of predictions (with --ckpt) or of the layers alone.
    EquivTest(EquivArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 9)]
    pub max_objects: usize,
    /// Train, val and test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15", value_parser = parse_split)]
    pub split: [f64; 3],
    /// Clear a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "esgnn1")]
    pub preset: String,
    /// Explicit layer list such as FAN,EGCL (overrides --preset).
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<String>>,
    /// With --layers: append the coordinate embedding to edge features.
    #[arg(long, requires = "layers")]
    pub concat_coord_embed: bool,
    #[arg(long, default_value_t = 30)]
    pub epochs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "strict")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub eval_every: u64,
    #[arg(long)]
    pub scenes_per_epoch: Option<usize>,
    #[arg(long)]
    pub class_weighting: bool,
    /// Narrow layer widths.
    #[arg(long)]
    pub compact: bool,
    /// Continue this checkpoint up to --epochs total epochs.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long, hide = true)]
    pub inject_canary: bool,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    /// Also write the report JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Also write the report as a CSV row here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct EquivArgs {
    /// Checkpoint to test end to end; without it the layer suite runs.
    #[arg(long, requires = "data")]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long, default_value = "yaw")]
    pub family: Family,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the suite CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_canary: bool,
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "esgnn1")]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
}

fn parse_split(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 3] = parts
        .try_into()
        .map_err(|_| "expected three comma-separated fractions".to_string())?;
    esgnn_core::scene::split_counts(0, arr).map_err(|e| e.to_string())?;
    Ok(arr)
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    Empty(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Empty(_) => 3,
            Failure::Verification(_) => 5,
            Failure::Core(e) => match e {
                Error::Version { .. } | Error::Checkpoint(_) | Error::Dimension { .. } => 2,
                Error::Refused(_) => 4,
                _ => 1,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Usage(m) | Failure::Empty(m) | Failure::Verification(m) => m.clone(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ESGNN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("ESGNN_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::EquivTest(a) => commands::equiv_test(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
