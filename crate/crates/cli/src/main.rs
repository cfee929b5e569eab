mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use concept_debias::ErrorKind;

#[derive(Parser, Debug)]
#[command(name = "concept-debias", version, about = "Remove sensitive concepts from classifier embeddings")]
struct Cli {
    /// Pipeline config; also supplies training and design defaults to the
    /// single-step commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace every seed with this value.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',')]
    lr_grid: Option<Vec<f64>>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    Task,
    Sensitive,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Auto,
    DenseJacobi,
    Randomized,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Norm {
    Raw,
    MaxAbs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean and neutralize a corpus with one document per line.
    Neutralize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Extra first names, one per line.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value_t = concept_debias::text::DEFAULT_MAX_TOKENS)]
        max_tokens: usize,
        /// Also write per-document change counts as JSON lines.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a planted-bias dataset bundle.
    Synth {
        /// JSON generator spec; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        r_true: Option<usize>,
        #[arg(long)]
        leak: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the concept basis of a bundle's embeddings.
    Decompose {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a probe head on the bundle's train split.
    TrainHead {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum)]
        target: Target,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Total Sobol importance of every concept for both heads.
    Importance {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        task_head: PathBuf,
        #[arg(long)]
        sensitive_head: PathBuf,
        /// Bundle used to draw evaluation rows from the validation split,
        /// stratified by task label; without it rows are drawn from all.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        eval_rows: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Order concepts by sensitive-to-task importance ratio.
    Rank {
        #[arg(long)]
        importance: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove the top-k concepts for each k and retrain both heads.
    Sweep {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        importance: PathBuf,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long)]
        ks: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the units of an occluded document for one concept.
    Explain {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        occlusions: PathBuf,
        #[arg(long)]
        concept: usize,
        #[arg(long, value_enum, default_value_t = Norm::Raw)]
        normalize: Norm,
        #[arg(long)]
        html: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline from `--config`.
    Run,
    /// Write CSV, JSON and SVG report files into an artifact directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .init();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
