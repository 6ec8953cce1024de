//! `nfig`: tokenize, reconstruct, train and sample from the command line.
//!
//! Reports go to stdout as JSON, diagnostics to stderr. Exit codes: 0 ok,
//! 1 invalid usage or parameters, 2 I/O, 3 file format, 4 dimensions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nfig_core::Error;

use commands::Outputs;
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "nfig", version, about = "Frequency-band image tokenization and next-frequency generation")]
struct Cli {
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode an image into band tokens.
    Tokenize(commands::TokenizeArgs),
    /// Decode a token file back into an image.
    Reconstruct(commands::ReconstructArgs),
    /// Fit a codebook to the band vectors of a set of images.
    TrainCodebook(commands::TrainCodebookArgs),
    /// Train the next-frequency model on token files.
    TrainModel(commands::TrainModelArgs),
    /// Generate an image for a class.
    Sample(commands::SampleArgs),
    /// Radial power profile and 1/f slope of an image.
    Spectrum(commands::SpectrumArgs),
    /// PSD distance and Frequency Keep Score between images.
    Fks(commands::FksArgs),
    /// Share of spectral energy per schedule band.
    BandEnergy(commands::BandEnergyArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Format(_) | Error::StaleCodebook { .. } | Error::CorruptToken { .. } => 3,
        Error::Dimension(_) | Error::Index { .. } => 4,
        _ => 1,
    }
}

fn run(cli: &Cli, outputs: &mut Outputs) -> nfig_core::Result<serde_json::Value> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cli.overrides.apply(&mut cfg)?;
    match &cli.command {
        Command::Tokenize(a) => commands::tokenize(a, &cfg, outputs),
        Command::Reconstruct(a) => commands::reconstruct(a, &cfg, outputs),
        Command::TrainCodebook(a) => commands::train_codebook_cmd(a, &cfg, outputs),
        Command::TrainModel(a) => commands::train_model(a, &cfg, outputs),
        Command::Sample(a) => commands::sample_cmd(a, &cfg, outputs),
        Command::Spectrum(a) => commands::spectrum(a, &cfg, outputs),
        Command::Fks(a) => commands::fks_cmd(a, &cfg, outputs),
        Command::BandEnergy(a) => commands::band_energy(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    // All reductions are sequential, so results are deterministic whether
    // or not NFIG_DETERMINISTIC is set.
    let mut outputs = Outputs::default();
    match run(&cli, &mut outputs) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            outputs.remove_all();
            eprintln!("nfig: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
