use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "maskboost",
    version,
    about = "Two-party vertical federated boosting with masked split finding"
)]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Experiment config file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Where to write the command's main artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print machine-readable JSON instead of a text summary.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-party dataset as CSV.
    GenData(GenData),
    /// Train one model and report its training AUC.
    Train(Train),
    /// Calibrate noise parameters for a privacy configuration.
    Calibrate(Calibrate),
    /// Evaluate the split-score utility bound.
    Bound(Bound),
    /// Label-inference attack by the passive party.
    AttackAp(AttackAp),
    /// Splitting-vector inference attack by the active party.
    AttackPp(AttackPp),
    /// Run a full experiment sweep from the config.
    Run,
    /// Verify a recorded transcript against the passive party's private state.
    Replay(Replay),
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d_ap: usize,
    #[arg(long, default_value_t = 4)]
    d_pp: usize,
    /// Positive-class probability.
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    /// Label flip rate.
    #[arg(long, default_value_t = 0.05)]
    label_noise: f64,
}

#[derive(Debug, Args)]
struct Train {
    /// CSV input; without it the config's data source is used.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Active-party column count when reading CSV (leading columns).
    #[arg(long)]
    d_ap: Option<usize>,
    #[arg(long, default_value = "masked")]
    method: String,
    #[arg(long)]
    eps_ap: Option<f64>,
    /// Masked training with lossless noise only and no accounting.
    #[arg(long)]
    lossless: bool,
    /// Write the message transcript as NDJSON.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Keep full payloads in the transcript so it can be replayed.
    #[arg(long)]
    full_payloads: bool,
    /// Write the passive party's private state (needed for replay).
    #[arg(long)]
    pp_state: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Calibrate {
    #[arg(long)]
    eps_ap: Option<f64>,
    #[arg(long)]
    delta_ap: Option<f64>,
    #[arg(long)]
    eps_pp: Option<f64>,
    #[arg(long)]
    delta_pp: Option<f64>,
    #[arg(long)]
    w: Option<usize>,
    /// Instances at the root node.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Passive-party candidates per node.
    #[arg(long, default_value_t = 32)]
    candidates: usize,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct Bound {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    gl: f64,
    #[arg(long)]
    hl: f64,
    #[arg(long)]
    gr: f64,
    #[arg(long)]
    hr: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct AttackAp {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    n_active: usize,
    #[arg(long, default_value_t = 1)]
    w: usize,
    /// Candidate releases per trial.
    #[arg(long, default_value_t = 1)]
    candidates: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0.5)]
    eps_ap: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta_ap: f64,
    #[arg(long, default_value_t = 1.0)]
    eps_pp: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta_pp: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma1: f64,
    /// Fix the disturbing-noise scale instead of calibrating it.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Fix the coefficient radius² instead of calibrating it.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Debug, Args)]
struct AttackPp {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    n_active: usize,
    #[arg(long, default_value_t = 1)]
    w: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    eps_pp: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta_pp: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma1: f64,
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Debug, Args)]
struct Replay {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    pp_state: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
