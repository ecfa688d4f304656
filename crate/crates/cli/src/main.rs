use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod ablate;
mod eval;
mod gradcheck;
mod manifest;
mod synth;
mod train;

/// Rolling-Unrolling LSTM experiments: synthetic data, staged training,
/// evaluation, prediction dumps, gradient checks and ablations.
#[derive(Parser, Debug)]
#[command(name = "rulstm", version, args_override_self = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Root seed; overrides the seed of any config file.
    #[arg(long, global = true, env = "RU_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for training and evaluation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(synth::SynthArgs),
    /// Train one stage or the whole schedule.
    Train(train::TrainArgs),
    /// Evaluate a model and write a metrics report.
    Eval(eval::EvalArgs),
    /// Dump per-sample predictions as JSON lines.
    Predict(eval::PredictArgs),
    /// Finite-difference check of every parameter block.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Run an ablation sweep.
    Ablate(ablate::AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Anticipation,
    Early,
    Recognition,
}

pub fn out_dir(path: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Synth(a) => synth::run(&cli.global, a),
        Command::Train(a) => train::run(&cli.global, a),
        Command::Eval(a) => eval::run_eval(&cli.global, a),
        Command::Predict(a) => eval::run_predict(&cli.global, a),
        Command::Gradcheck(a) => gradcheck::run(&cli.global, a),
        Command::Ablate(a) => ablate::run(&cli.global, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
