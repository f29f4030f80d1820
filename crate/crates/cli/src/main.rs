use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Multi-fidelity probabilistic surrogates for structural response.
#[derive(Parser)]
#[command(name = "mfflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for simulation and ablation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment config: a JSON file, or one of the preset names
    /// case1, case2, desk_small.
    #[arg(long)]
    pub config: String,

    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Lf,
    Mf,
    #[value(alias = "hf_only")]
    HfOnly,
}

impl From<StageArg> for mfflow::pipeline::Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Lf => Self::Lf,
            StageArg::Mf => Self::Mf,
            StageArg::HfOnly => Self::HfOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the paired LF/HF datasets.
    Generate(Common),
    /// Train one stage and save its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        stage: StageArg,
    },
    /// Predictive mean and credible band for new parameter vectors.
    Predict(commands::PredictArgs),
    /// Train and score the scenario grid on the HF test split.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Scenario to run instead of the configured grid (repeatable),
        /// e.g. `MF-180`, `HF-only-180`, `LF-only`.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
    },
    /// Score a saved checkpoint on the HF test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "mf")]
        stage: StageArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Generate(common) => commands::generate(&common),
        Command::Train { common, stage } => commands::train(&common, stage.into()),
        Command::Predict(args) => commands::predict(&args),
        Command::Ablate { common, scenarios } => commands::ablate(&common, &scenarios),
        Command::Evaluate { common, stage } => commands::evaluate(&common, stage.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
