//! Command-line front end: dataset generation, training, prediction,
//! evaluation, the toy benchmark, and gradient checking.
//!
//! Every command is a pure function of its flags, config file, and input
//! files: identical inputs produce byte-identical outputs, regardless of
//! `--jobs`.

mod commands;
mod config;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{evaluate, gen, grad_check, predict, toy_bench, train};

#[derive(Debug, Parser)]
#[command(
    name = "soc-ensemble",
    version,
    about = "Uncertainty-aware state-of-charge regression with deep ensembles"
)]
struct Cli {
    /// Cap on worker threads (0 = one per core). Does not affect results.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset file.
    Gen {
        #[command(subcommand)]
        kind: gen::GenKind,
    },
    /// Train an ensemble end to end and persist it with its logs.
    Train(train::TrainArgs),
    /// Predict mean and sigma for every row of an input file.
    Predict(predict::PredictArgs),
    /// Produce a metric report and interval series for a saved ensemble.
    Evaluate(evaluate::EvaluateArgs),
    /// Run the sinusoidal toy benchmark bundle.
    ToyBench(toy_bench::ToyBenchArgs),
    /// Verify analytic gradients against finite differences.
    GradCheck(grad_check::GradCheckArgs),
}

fn run(cli: &Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .ok(); // already-built pool only happens in tests
    }
    match &cli.command {
        Command::Gen { kind } => gen::run(kind),
        Command::Train(args) => train::run(args),
        Command::Predict(args) => predict::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::ToyBench(args) => toy_bench::run(args),
        Command::GradCheck(args) => grad_check::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
