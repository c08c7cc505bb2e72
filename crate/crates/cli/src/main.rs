use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbv_cli::{load_config, run_experiment, CliError, Experiment, RunConfig};

/// Simulate PbV-center spin-photon experiments and write CSV, SVG and JSON results.
#[derive(Parser)]
#[command(name = "pbv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// PLE spectra over a magnetic-field sweep.
    Ple,
    /// Optical spin initialization transient.
    Init,
    /// Initialization rate versus power; fits Psat and η.
    Saturation,
    /// Single-shot readout histograms and fidelity.
    Ssr,
    /// T1 recovery and relaxation rate versus temperature.
    T1,
    /// Coherent population trapping linewidth versus power and T2*.
    Cpt,
    /// Fit calibration parameters to target observables.
    Calibrate,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Ple => Experiment::Ple,
            Command::Init => Experiment::Init,
            Command::Saturation => Experiment::Saturation,
            Command::Ssr => Experiment::Ssr,
            Command::T1 => Experiment::T1,
            Command::Cpt => Experiment::Cpt,
            Command::Calibrate => Experiment::Calibrate,
        }
    }
}

fn build_config(exp: Experiment, c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default_for(exp),
    };
    if cfg.experiment != exp {
        return Err(CliError::Config {
            path: "experiment".into(),
            message: format!(
                "config is for `{}` but the subcommand is `{exp}`",
                cfg.experiment
            ),
        });
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exp = cli.command.experiment();
    let result = build_config(exp, &cli.common).and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(manifest) => {
            if !cli.common.quiet {
                println!(
                    "{exp}: wrote {} files to {} in {:.2} s",
                    manifest.files.len() + 1,
                    manifest.output_dir.display(),
                    manifest.wall_clock_seconds
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
