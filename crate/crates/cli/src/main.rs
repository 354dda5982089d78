//! `dexpipe` command-line entry point.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dexpipe", version, about = "Multi-step dexterous manipulation pipeline")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DEXPIPE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// `SIM,NOM` episode counts, not both zero.
#[derive(Debug, Clone, Copy)]
pub struct MixArg(pub usize, pub usize);

fn parse_mix(s: &str) -> Result<MixArg, String> {
    let (a, b) = s.split_once(',').ok_or("expected SIM,NOM")?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let m = MixArg(n(a)?, n(b)?);
    if m.0 == 0 && m.1 == 0 {
        return Err("mix 0,0 selects no episodes".into());
    }
    Ok(m)
}

#[derive(Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub n: usize,
    /// Randomization spec (TOML or JSON); defaults to the simulated-demonstration spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Zero-width randomization (the nominal world).
    #[arg(long)]
    pub nominal: bool,
    /// Generation options (expert and sequencer settings).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct TeleopArgs {
    #[arg(long)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Randomization spec of the operator's worlds; defaults to nominal.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct TrainBcArgs {
    /// Simulated and nominal episode counts, e.g. 4000,40.
    #[arg(long, value_parser = parse_mix)]
    pub mix: MixArg,
    /// Dataset root holding `sim/` and `nominal/`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Behavior-cloning hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainRlArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub skill: u8,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct DistillArgs {
    /// Teacher model; its run directory supplies the skill and config unless given.
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub skill: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub trials: usize,
    /// Directory with grasp.dxpm and inhand1.dxpm .. inhand4.dxpm.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Spawn randomization; defaults to nominal.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Sequencer thresholds and budgets.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Dataset root holding `sim/` and `nominal/`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations.
    Datagen(DatagenArgs),
    /// Serve an operator teleoperation session.
    Teleop(TeleopArgs),
    /// Train the grasp-and-lift policy by behavior cloning.
    TrainBc(TrainBcArgs),
    /// Train an in-hand rotation teacher.
    TrainRl(TrainRlArgs),
    /// Distill a teacher into a force-feedback student.
    Distill(DistillArgs),
    /// Run full-pipeline trials and report per-step successes.
    Eval(EvalArgs),
    /// Run the three data-mix setups on held-out object variants.
    AblateMix(AblateArgs),
    /// Print the tables of a machine-readable report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> dexpipe::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| dexpipe::Error::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Datagen(a) => commands::datagen(&a),
        Command::Teleop(a) => commands::teleop(&a),
        Command::TrainBc(a) => commands::train_bc(&a),
        Command::TrainRl(a) => commands::train_rl(&a),
        Command::Distill(a) => commands::distill(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::AblateMix(a) => commands::ablate_mix(&a),
        Command::Report { input } => report::print(&input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
