use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magdirac::commands::{run, Command};

#[derive(Parser)]
#[command(name = "magdirac", version, about = "Spectral toolkit for lattice magnetic Dirac operators")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Internal spectrum, its symmetrisation and gaps.
    InternalSpectrum(Args),
    /// Mourre lower bound over a grid of energies, optionally measured.
    MourreSweep(Args),
    /// Decay classes, Coulomb bound and gap eigenvalues of H0 + V.
    PerturbedAnalysis(Args),
    /// Resolvent matrix elements as the imaginary part shrinks.
    LapScan(Args),
    /// Built-in consistency checks.
    Selftest(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON configuration file.
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::InternalSpectrum(a) => (Command::InternalSpectrum, a),
        Cmd::MourreSweep(a) => (Command::MourreSweep, a),
        Cmd::PerturbedAnalysis(a) => (Command::PerturbedAnalysis, a),
        Cmd::LapScan(a) => (Command::LapScan, a),
        Cmd::Selftest(a) => (Command::Selftest, a),
    };
    match run(cmd, &args.config, &args.out_dir) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
