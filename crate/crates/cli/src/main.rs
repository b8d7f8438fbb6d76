//! Command-line interface: training, evaluation, sampling, benchmarks.

mod commands;
mod manifest;
mod settings;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

#[global_allocator]
static ALLOC: gekc::bench::TrackingAllocator = gekc::bench::TrackingAllocator;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] gekc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use gekc::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(E::Argument(_) | E::Config(_) | E::Unsupported(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gekc", version = manifest::VERSION, about = "Probabilistic circuits for knowledge graph embeddings")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Cmd {
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Filtered link-prediction metrics of a checkpoint.
    Eval(EvalArgs),
    /// Draw triples from a checkpoint.
    Sample(SampleArgs),
    /// Kernel triple distance between two triple sets.
    Ktd(KtdArgs),
    /// Calibration error of triple classification.
    Calibrate(CalibrateArgs),
    /// Step time and peak memory over a configuration grid.
    Bench(BenchArgs),
    /// Number of edges of a model's circuit.
    CircuitSize(CircuitSizeArgs),
    /// Summary of compiled domain constraints.
    ConstraintsReport(ConstraintsReportArgs),
}

/// Options shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker cap (computation is single-threaded).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Ordered reductions (always the case).
    #[arg(long)]
    pub deterministic: bool,
}

/// Dataset location: a directory with train/valid/test TSVs, or three files.
#[derive(Args, Debug, Clone)]
pub struct Data {
    /// Directory holding train.tsv, valid.tsv and test.tsv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training split (overrides --data).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation split.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Test split.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    /// cp, complex, rescal or tucker.
    #[arg(long)]
    pub family: Option<gekc::Family>,
    /// ebm, nonneg or squared.
    #[arg(long)]
    pub kind: Option<gekc::ModelKind>,
    /// pll or mle.
    #[arg(long)]
    pub objective: Option<String>,
    /// Embedding rank.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Relation rank of tucker models (defaults to --dim).
    #[arg(long)]
    pub relation_dim: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation MRR improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// PLL weight of the subject term.
    #[arg(long)]
    pub omega_s: Option<f64>,
    /// PLL weight of the predicate term.
    #[arg(long)]
    pub omega_r: Option<f64>,
    /// PLL weight of the object term.
    #[arg(long)]
    pub omega_o: Option<f64>,
    /// Adam first-moment decay.
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam second-moment decay.
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam denominator offset.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// gaussian, dirichlet or lognormal.
    #[arg(long)]
    pub init: Option<String>,
    /// σ of gaussian/lognormal or α of dirichlet.
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// double or single.
    #[arg(long)]
    pub precision: Option<String>,
    /// Validation triples for the per-epoch MRR (0 disables early stopping).
    #[arg(long)]
    pub valid_subsample: Option<usize>,
    /// Byte cap of one logits block of energy-based PLL.
    #[arg(long)]
    pub logits_cap: Option<usize>,
    /// Domain metadata file; training uses the constrained objectives.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Leave predicates without domains unconstrained instead of failing.
    #[arg(long)]
    pub allow_unconstrained: bool,
    /// Energy-based checkpoint to initialise a squared model from.
    #[arg(long)]
    pub distill_from: Option<PathBuf>,
    /// Add reciprocal training triples.
    #[arg(long)]
    pub reciprocal: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// test or valid.
    #[arg(long)]
    pub split: Option<String>,
    /// Comma-separated cutoffs.
    #[arg(long)]
    pub ks: Option<String>,
    /// Domain metadata for Sem@k.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Leave predicates without domains unconstrained instead of failing.
    #[arg(long)]
    pub allow_unconstrained: bool,
    /// Rank with the constrained model.
    #[arg(long)]
    pub constrained: bool,
    /// Also write per-query ranks.
    #[arg(long)]
    pub dump_ranks: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of triples to draw.
    #[arg(long)]
    pub n: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// ancestral or autoregressive.
    #[arg(long)]
    pub method: Option<String>,
    /// Sample from the constrained model.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Leave predicates without domains unconstrained instead of failing.
    #[arg(long)]
    pub allow_unconstrained: bool,
}

#[derive(Args, Debug)]
pub struct KtdArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    /// Complex checkpoint used as the triple embedder.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// First triple set (TSV, names).
    #[arg(long)]
    pub set_a: Option<PathBuf>,
    /// Second triple set (defaults to the test split).
    #[arg(long)]
    pub set_b: Option<PathBuf>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Timed repeats per point.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// logistic or minmax.
    #[arg(long)]
    pub normalization: Option<String>,
    /// Number of calibration bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// test or valid.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated families.
    #[arg(long)]
    pub families: Option<String>,
    /// Comma-separated kinds.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Comma-separated entity counts.
    #[arg(long)]
    pub entities: Option<String>,
    /// Number of predicates.
    #[arg(long)]
    pub relations: Option<usize>,
    /// Comma-separated ranks.
    #[arg(long)]
    pub dims: Option<String>,
    /// Comma-separated batch sizes.
    #[arg(long)]
    pub batches: Option<String>,
    /// pll or mle.
    #[arg(long)]
    pub objective: Option<String>,
    /// Timed repeats per point.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Untimed warm-up steps per point.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Memory cap in MiB; larger points become OOM-refused rows.
    #[arg(long)]
    pub mem_cap_mib: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CircuitSizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// cp, complex, rescal or tucker.
    #[arg(long)]
    pub family: Option<gekc::Family>,
    /// ebm, nonneg or squared.
    #[arg(long)]
    pub kind: Option<gekc::ModelKind>,
    /// Embedding rank.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub relation_dim: Option<usize>,
    /// Number of entities.
    #[arg(long)]
    pub entities: Option<usize>,
    /// Number of predicates.
    #[arg(long)]
    pub relations: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ConstraintsReportArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    /// Domain metadata file.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Leave predicates without domains unconstrained instead of failing.
    #[arg(long)]
    pub allow_unconstrained: bool,
}

/// Config keys accepted by a subcommand: the ids of its flags.
pub fn known_keys(name: &str) -> BTreeSet<String> {
    Cli::command()
        .find_subcommand(name)
        .map(|c| {
            c.get_arguments()
                .map(|a| a.get_id().as_str().to_owned())
                .filter(|id| id != "config" && id != "help")
                .collect()
        })
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Cmd::Train(a) => commands::train(a),
        Cmd::Eval(a) => commands::eval(a),
        Cmd::Sample(a) => commands::sample(a),
        Cmd::Ktd(a) => commands::ktd(a),
        Cmd::Calibrate(a) => commands::calibrate(a),
        Cmd::Bench(a) => commands::bench(a),
        Cmd::CircuitSize(a) => commands::circuit_size(a),
        Cmd::ConstraintsReport(a) => commands::constraints_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gekc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
