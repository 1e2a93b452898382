use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ghost_tracker::{run, Mode, Overrides};

#[derive(Parser)]
#[command(name = "ghost-tracker", version, about = "Ghost-imaging background reconstruction and motion tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct the static background (frame 0).
    Background(Args),
    /// Track the moving object through every frame.
    Track(Args),
    /// Sweep MSE over measurement counts and photon budgets.
    Sweep(Args),
    /// Verify a finished run and re-derive its metrics.
    Eval(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Measurements per frame, overriding `m` (and the sweep grid).
    #[arg(long)]
    m: Option<usize>,
    /// Photons per measurement, overriding `noise.photons` (and the sweep grid).
    #[arg(long)]
    photons: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Background(a) => (Mode::Background, a),
        Command::Track(a) => (Mode::Track, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Eval(a) => (Mode::Eval, a),
    };
    let overrides = Overrides { out: args.out, seed: args.seed, m: args.m, photons: args.photons };
    match run(mode, &args.config, &overrides) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
