//! `sectorbeam` command-line tool.
//!
//! Exit status: 0 on success, 1 for bad input or configuration, 2 when the
//! numerics fail or a scene target lies outside every sector.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error carried to `main` together with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<sectorbeam::Error> for Failure {
    fn from(e: sectorbeam::Error) -> Self {
        let numerical = e.is_numerical() || matches!(e, sectorbeam::Error::OutsideSectors { .. });
        Self {
            code: if numerical { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "sectorbeam", version, about = "Angular-sector beamformer design and evaluation")]
struct Cli {
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, env = "SECTORBEAM_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design a beamformer bank from a TOML configuration.
    Design(DesignArgs),
    /// Apply a bank to a multichannel WAV file.
    Apply(ApplyArgs),
    /// Export the spatial response of one sector as CSV.
    Pattern(PatternArgs),
    /// Render a synthetic scene, beamform it and report SIR gains.
    Simulate(SimulateArgs),
    /// Turn (true, estimated) speaker-count pairs into confusion scores.
    EvalCounts(EvalCountsArgs),
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output bank file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the weights as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ApplyArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Input WAV with one channel per microphone.
    pub input: PathBuf,
    /// Output float WAV with one channel per sector.
    #[arg(long)]
    pub out: PathBuf,
    /// STFT hop in samples; defaults to n_fft / 2.
    #[arg(long)]
    pub hop: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PatternArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Sector number, starting at 1.
    #[arg(long)]
    pub sector: usize,
    /// Comma-separated elevations in degrees.
    #[arg(long, value_delimiter = ',', default_value = "10,25,40,55")]
    pub elevations: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub azimuth_step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    /// Per-sector SIR report (CSV). Rendered WAVs are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalCountsArgs {
    /// CSV with columns true_count,estimated_count.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Design(a) => commands::design(a),
        Command::Apply(a) => commands::apply(a),
        Command::Pattern(a) => commands::pattern(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::EvalCounts(a) => commands::eval_counts(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
