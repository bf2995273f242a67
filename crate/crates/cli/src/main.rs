mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ConfigArgs;

#[derive(Debug, Parser)]
#[command(
    name = "gdd",
    version,
    about = "Aspect-level sentiment classifier over dependency graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on a JSONL dataset and write a checkpoint; one JSON line per epoch on stdout
    Train {
        #[arg(long, value_name = "JSONL")]
        train: PathBuf,
        #[arg(long, value_name = "JSONL")]
        dev: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Precomputed token vectors replacing the embedding table
        #[arg(long, value_name = "JSONL")]
        vectors: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print accuracy, macro-F1 and per-class scores of a checkpoint on a dataset
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_name = "JSONL")]
        vectors: Option<PathBuf>,
    },
    /// Build one aspect-word graph per aspect span; one JSON line each
    BuildGraph {
        #[arg(long, value_name = "FILE")]
        conllu: PathBuf,
        /// JSONL; line i holds the [start, end) spans of sentence i
        #[arg(long, value_name = "JSONL")]
        spans: PathBuf,
        #[arg(long, default_value_t = 3)]
        kappa_max: usize,
        #[arg(long)]
        drop_punct: bool,
    },
    /// Dump mask, attention and graph attention values for one example
    Inspect {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        /// Zero-based line of the example in the dataset
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_name = "JSONL")]
        vectors: Option<PathBuf>,
    },
    /// Check numerically that the centring objective is stationary at the row means
    VerifyProposition {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows per instance
        #[arg(long = "n", default_value_t = 6)]
        n: usize,
        /// Row width
        #[arg(long = "d", default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
    /// Compare analytic and finite-difference gradients of every parameter tensor
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a seeded synthetic dataset as JSONL
    Synth {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            train,
            dev,
            out,
            vectors,
            config,
        } => commands::train(&train, dev.as_deref(), &out, vectors.as_deref(), &config),
        Command::Eval {
            checkpoint,
            data,
            vectors,
        } => commands::eval(&checkpoint, &data, vectors.as_deref()),
        Command::BuildGraph {
            conllu,
            spans,
            kappa_max,
            drop_punct,
        } => commands::build_graph(&conllu, &spans, kappa_max, drop_punct),
        Command::Inspect {
            checkpoint,
            data,
            index,
            vectors,
        } => commands::inspect(&checkpoint, &data, index, vectors.as_deref()),
        Command::VerifyProposition {
            seed,
            n,
            d,
            trials,
            draws,
            tolerance,
            eps,
        } => commands::verify_proposition(seed, n, d, trials, draws, tolerance, eps),
        Command::Gradcheck {
            tolerance,
            eps,
            config,
        } => commands::gradcheck(tolerance, eps, &config),
        Command::Synth { n, seed } => commands::synth(n, seed),
    };
    match result {
        Ok(code) => code,
        Err(err) if commands::is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            commands::exit_code_for(&err)
        }
    }
}
