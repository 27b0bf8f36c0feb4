//! `vqclab` — experiment harness for the simulator crate: dataset
//! preparation, training, backdoor injection, trigger-config emission,
//! attack evaluation, comparison tables, and depth reports, all driven by
//! versioned TOML manifests.

mod commands;
mod manifest;
mod output;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "vqclab",
    version,
    about = "Variational-circuit training and backdoor experiment harness"
)]
struct Cli {
    /// Size of the worker thread pool (default: one per core). Affects
    /// runtime only, never results.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic digit corpus as IDX files
    SynthData(commands::SynthDataArgs),
    /// Prepare a classification dataset: IDX -> PCA -> scaled cache
    PrepareData(commands::PrepareDataArgs),
    /// Train a model; writes a checkpoint and per-epoch loss CSV
    Train(commands::TrainArgs),
    /// Write a description of the backdoored task circuit
    Inject(commands::InjectArgs),
    /// Emit a benign or trigger-carrying server configuration
    GenConfig(commands::GenConfigArgs),
    /// Evaluate accuracy, attack success, and confusion under a config
    AttackEval(commands::AttackEvalArgs),
    /// Accuracy table: clean vs data poisoning vs config trigger
    Compare(commands::CompareArgs),
    /// Pre-gate-only attack success as a function of trigger width
    SweepPartial(commands::SweepPartialArgs),
    /// Pre- and post-fusion depth of clean vs backdoored circuits
    DepthReport(commands::DepthReportArgs),
    /// Backdoor persistence under clean retraining
    RetrainEval(commands::RetrainEvalArgs),
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("flag `--threads`")?;
    }
    match &cli.command {
        Command::SynthData(args) => commands::synth_data(args),
        Command::PrepareData(args) => commands::prepare_data(args),
        Command::Train(args) => commands::train(args),
        Command::Inject(args) => commands::inject(args),
        Command::GenConfig(args) => commands::gen_config(args),
        Command::AttackEval(args) => commands::attack_eval(args),
        Command::Compare(args) => commands::compare(args),
        Command::SweepPartial(args) => commands::sweep_partial(args),
        Command::DepthReport(args) => commands::depth_report(args),
        Command::RetrainEval(args) => commands::retrain_eval(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
