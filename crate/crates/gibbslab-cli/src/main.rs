//! `gibbslab` — certify models, run inequality suites, simulate coupled
//! chains.
//!
//! Exit codes are the machine contract:
//!
//! * `0` — everything requested ran and passed;
//! * `1` — at least one inequality report failed;
//! * `2` — configuration error (bad flags, unreadable or invalid
//!   config, a suite the model's mode cannot run);
//! * `3` — certification failure (the model is not contractive by the
//!   attempted route, and the request needed that certificate).
//!
//! All randomness flows from `--seed`; two runs with identical inputs
//! write byte-identical output files. Output files land in `--out`
//! under fixed names (`certificates.json`, `reports.jsonl`,
//! `summary.csv`, `curves.csv`), each written to a temporary file and
//! renamed into place.

use clap::{Args, Parser, Subcommand};

mod certify_cmd;
mod output;
mod simulate_cmd;
mod verify_cmd;

/// Errors that map onto the non-zero, non-report exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: anything wrong with the inputs.
    Config(String),
    /// Exit 3: a required certificate came back as a failure.
    Certification(String),
    /// Exit 2 as well, but kept separate for error text.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Certification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Certification(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "gibbslab",
    version,
    about = "Certify Gibbs-sampler contraction constants and verify the transport inequalities they imply"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the model, certify its constants, write certificates.json.
    Certify(CertifyArgs),
    /// Run inequality suites, write reports.jsonl and summary.csv.
    Verify(VerifyArgs),
    /// Simulate the coupled chain, write the decay curve to curves.csv.
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Path to the JSON model configuration.
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "gibbslab-out")]
    pub out: std::path::PathBuf,
    /// Master seed; every random draw derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trials per boundary configuration for sampled constants
    /// (discrete models).
    #[arg(long, default_value_t = 400)]
    pub trials: u64,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated inequality ids to run (default: every suite the
    /// model's mode supports). Known ids: eq2.3, lemma1, aux, prop2,
    /// cor2, thm1, thm2-bridge, cor1, conc1.1, chain3.12.
    #[arg(long, value_delimiter = ',')]
    pub suite: Vec<String>,
    /// Trial count per randomized suite.
    #[arg(long, default_value_t = 32)]
    pub trials: u64,
    /// Chain length for the chain suites and sweep count caps.
    #[arg(long, default_value_t = 4)]
    pub steps: usize,
    /// JSON object of per-id absolute tolerances, e.g.
    /// '{"prop2": 1e-8}'.
    #[arg(long)]
    pub tolerance_overrides: Option<String>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of coupled steps to simulate.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Monte Carlo trajectories.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Certify(args) => certify_cmd::run(&args),
        Command::Verify(args) => verify_cmd::run(&args),
        Command::Simulate(args) => simulate_cmd::run(&args),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    };
    std::process::exit(code);
}

/// Reads and builds the model configuration, mapping every failure to a
/// config error.
pub fn load_config(path: &std::path::Path) -> Result<gibbslab::model::BuiltModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    gibbslab::model::load_model(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
